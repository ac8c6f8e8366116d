"""Scalar diagnostics of states and time series."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import hilbert, operators
from .hilbert import SpinBasis


def expectation(psi: np.ndarray, op) -> float:
    return float(np.vdot(psi, op @ psi).real)


def variance(psi: np.ndarray, op) -> float:
    a_psi = op @ psi
    mean = np.vdot(psi, a_psi).real
    return float(np.vdot(a_psi, a_psi).real - mean**2)


def entanglement_entropy(psi: np.ndarray, basis: SpinBasis, cut: int | None = None) -> float:
    """Von Neumann entropy (nats) of sites ``1..cut``; default cut is L/2."""
    L = basis.L
    cut = L // 2 if cut is None else cut
    if not 0 <= cut <= L:
        raise ValueError(f"cut must lie in [0, {L}], got {cut}")
    full = hilbert.embed_state(psi, basis)
    # site 1 is the least significant bit, so the row index carries sites cut+1..L
    M = full.reshape(1 << (L - cut), 1 << cut)
    s = np.linalg.svd(M, compute_uv=False)
    p = s**2
    p = p[p > 1e-300]
    return float(-np.sum(p * np.log(p)))


def revival_fidelity(psi0: np.ndarray, psi: np.ndarray) -> float:
    return float(abs(np.vdot(psi0, psi)) ** 2)


def ghz_fidelity(psi: np.ndarray, basis: SpinBasis) -> float:
    """Best overlap with (|Z2> + e^{i phi}|Z2'>)/sqrt(2) over phi."""
    z2, z2p = hilbert.neel_configs(basis.L)
    c0 = psi[basis.index_of(z2)]
    c1 = psi[basis.index_of(z2p)]
    return float(0.5 * (abs(c0) ** 2 + abs(c1) ** 2 + 2 * abs(np.conj(c0) * c1)))


def quantum_fisher_information(psi: np.ndarray, A=None, basis: SpinBasis | None = None) -> float:
    """4 Var(A) for a pure state; ``A`` defaults to sum(n_odd - n_even) over ``basis``."""
    if A is None:
        if basis is None:
            raise ValueError("need either an observable or a basis")
        A = operators.build_collective_sz(basis)
    return max(4.0 * variance(psi, A), 0.0)


def subharmonic_weight(series, omega: float | None = None, t1: float = 1.0) -> float:
    """Normalized spectral weight of a sampled signal at angular frequency ``omega``.

    f = |sum_n e^{i omega t_n} y_n|^2 / (N sum_n y_n^2) with y the mean-subtracted
    signal sampled at t_n = n t1. The normalization makes an alternating sequence
    of even length score exactly 1. ``omega`` defaults to pi / t1.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 4:
        raise ValueError("subharmonic weight needs at least 4 samples")
    omega = np.pi / t1 if omega is None else omega
    y = x - x.mean()
    power = np.dot(y, y)
    scale = float(np.abs(x).max())
    if power <= (1e-12 * scale) ** 2 * x.size:
        return 0.0
    t = t1 * np.arange(x.size)
    amp = np.dot(np.exp(1j * omega * t), y)
    return float(min(abs(amp) ** 2 / (x.size * power), 1.0))


@dataclass
class SpectralSeries:
    omegas: np.ndarray
    amplitudes: np.ndarray
    T: float
    t1: float

    def weight_at(self, omega: float) -> float:
        return float(self.amplitudes[np.argmin(np.abs(self.omegas - omega))])

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega", "weight"])
        for o, a in zip(self.omegas, self.amplitudes):
            w.writerow([repr(float(o)), repr(float(a))])


def power_spectrum(series, t1: float = 1.0) -> SpectralSeries:
    """Normalized weights on the grid omega_k = 2 pi k / T, k = 1..N/2.

    The weights are the subharmonic-weight functional on each bin, so they sum to
    at most one (discrete Parseval).
    """
    x = np.asarray(series, dtype=float)
    N = x.size
    T = N * t1
    y = x - x.mean()
    power = np.dot(y, y)
    spec = np.abs(np.fft.rfft(y)) ** 2
    k = np.arange(1, spec.size)
    amps = spec[1:] / (N * power) if power > 0 else np.zeros(k.size)
    return SpectralSeries(2 * np.pi * k / T, amps, T, t1)


def time_averaged_entropy(record, name: str = "entropy") -> float:
    """Trapezoidal time average of an entropy series stored in a trajectory record."""
    t = np.asarray(record.times, dtype=float)
    s = np.asarray(record.series[name], dtype=float)
    if t.size == 1:
        return float(s[0])
    return float(np.trapezoid(s, t) / (t[-1] - t[0]))


@dataclass
class CorrelatorGrid:
    q: np.ndarray
    omega: np.ndarray
    values: np.ndarray  # shape (len(q), len(omega))

    def at(self, q: float, omega: float) -> complex:
        i = np.argmin(np.abs(np.angle(np.exp(1j * (self.q - q)))))
        j = np.argmin(np.abs(np.angle(np.exp(1j * (self.omega - omega)))))
        return complex(self.values[i, j])

    def median_abs(self) -> float:
        return float(np.median(np.abs(self.values)))

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", "omega", "re", "im", "abs"])
        for i, q in enumerate(self.q):
            for j, om in enumerate(self.omega):
                z = self.values[i, j]
                w.writerow([repr(float(q)), repr(float(om)), repr(float(z.real)),
                            repr(float(z.imag)), repr(float(abs(z)))])


def spatiotemporal_correlator(psi0: np.ndarray, U, basis: SpinBasis, n_T: int,
                              site: int = 0, average_sites: bool = False) -> CorrelatorGrid:
    """Fourier transform of <psi0| n_i U^n n_{i+j} U^-n |psi0> over j and n = 0..n_T-1.

    ``U`` is the one-period unitary (dense or sparse). Grids: q = 2 pi m / L,
    omega = 2 pi m' / n_T.
    """
    L = basis.L
    occ = basis.occupations.astype(float)
    psi0 = np.asarray(psi0, dtype=complex)
    Uh = U.conj().T
    sites = range(L) if average_sites else [site]
    corr = np.zeros((n_T, L), dtype=complex)
    for i in sites:
        alpha = psi0.copy()
        beta = occ[:, i] * psi0
        for n in range(n_T):
            # <psi0| n_i U^n n_{i+j} U^-n |psi0> = <U^-n n_i psi0| n_{i+j} |U^-n psi0>
            g = np.conj(beta) * alpha
            corr[n] += g @ np.roll(occ, -i, axis=1)
            alpha = Uh @ alpha
            beta = Uh @ beta
    corr /= len(sites)
    n_idx = np.arange(n_T)
    j_idx = np.arange(L)
    qs = 2 * np.pi * np.arange(L) / L
    ws = 2 * np.pi * np.arange(n_T) / n_T
    phase_n = np.exp(1j * np.outer(ws, n_idx))  # (omega, n)
    phase_j = np.exp(1j * np.outer(qs, j_idx))  # (q, j)
    values = phase_j @ corr.T @ phase_n.T / (n_T * L)
    return CorrelatorGrid(qs, ws, values)


def imbalance_operator(basis: SpinBasis, normalized: bool = True) -> sp.csr_matrix:
    return operators.build_imbalance(basis, normalized)
