"""First-order effective Hamiltonian near theta = pi, quasi-energy pairing and emergent timescales.

With C = exp(-i pi N) and X_tau = C exp(-i tau H), one period of the kicked
drive at theta = pi - epsilon is exp(i epsilon N) X_tau. To first order in
epsilon this is U_F1 = exp(-i epsilon H_F1) X_tau with

    H_F1 = -(N + X_tau^dag N X_tau) / 2,

which commutes with X_tau whenever X_tau is an involution (PXP-type models).
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import dynamics, hilbert, operators
from .hilbert import MomentumSector, SpinBasis

log = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-10
SPLITTING_FLOOR = 1e-13


def _dense(op) -> np.ndarray:
    return op.toarray() if sp.issparse(op) else np.asarray(op)


def _wrap(phase):
    """Map phases to (-pi, pi]."""
    p = np.mod(np.asarray(phase) + np.pi, 2 * np.pi) - np.pi
    return np.where(p <= -np.pi + 1e-15, np.pi, p)


@dataclass
class EffectiveModel:
    X: np.ndarray
    H_F1: np.ndarray
    N: np.ndarray
    tau: float
    epsilon: float
    base: str = "pxp"
    involution_error: float = 0.0
    commutator_error: float = 0.0
    k: float | None = None

    @property
    def dim(self) -> int:
        return self.X.shape[0]

    @property
    def is_involution(self) -> bool:
        return self.involution_error < 1e-8

    @cached_property
    def U_F1(self) -> np.ndarray:
        E, W = np.linalg.eigh(self.H_F1)
        return (W * np.exp(-1j * self.epsilon * E)) @ W.conj().T @ self.X

    @cached_property
    def hf1_spectrum(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Eigenvalues of H_F1 with eigenvectors rotated to diagonalize X_tau in each multiplet.

        Returns (E, W, x) with x the X_tau expectation of every column of W.
        """
        E, W = np.linalg.eigh(self.H_F1)
        W = W.astype(complex)
        scale = max(1.0, float(np.abs(E).max()))
        start = 0
        while start < len(E):
            stop = start + 1
            while stop < len(E) and E[stop] - E[stop - 1] < DEGENERACY_TOL * scale:
                stop += 1
            if stop - start > 1:
                Wg = W[:, start:stop]
                Xg = Wg.conj().T @ self.X @ Wg
                if self.is_involution:
                    _, R = np.linalg.eigh(0.5 * (Xg + Xg.conj().T))
                else:
                    _, R = np.linalg.eig(Xg)
                    R, _ = np.linalg.qr(R)
                W[:, start:stop] = Wg @ R
            start = stop
        x = np.einsum("ij,ij->j", W.conj(), self.X @ W)
        return E, W, x

    @cached_property
    def quasi_energies(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenphases in (-pi, pi] and eigenvectors of U_F1, ordered by phase."""
        if self.is_involution and self.commutator_error < 1e-8:
            E, W, x = self.hf1_spectrum
            phases = _wrap(-self.epsilon * E + np.angle(x))
        else:
            T, Z = sla.schur(self.U_F1, output="complex")
            W = Z
            phases = _wrap(np.angle(np.diag(T)))
        order = np.argsort(phases, kind="stable")
        return phases[order], W[:, order]


def build_effective_model(H, N, tau: float, epsilon: float, base: str = "pxp",
                          k: float | None = None) -> EffectiveModel:
    """Effective model from a static Hamiltonian and the number operator (dense algebra)."""
    Hd = _dense(H)
    n = np.real(np.diag(_dense(N)))
    if not np.allclose(_dense(N), np.diag(n)):
        raise ValueError("N must be diagonal")
    E, V = np.linalg.eigh(Hd)
    C = np.where(np.rint(n).astype(int) % 2, -1.0, 1.0)
    X = C[:, None] * ((V * np.exp(-1j * tau * E)) @ V.conj().T)
    eye = np.eye(len(n))
    inv_err = float(np.abs(X @ X - eye).max())
    XNX = X.conj().T @ (n[:, None] * X)
    H_F1 = -0.5 * (np.diag(n) + XNX)
    H_F1 = 0.5 * (H_F1 + H_F1.conj().T)
    comm = float(np.abs(H_F1 @ X - X @ H_F1).max())
    return EffectiveModel(X, H_F1, np.diag(n), tau, epsilon, base, inv_err, comm, k)


def sector_models(basis: SpinBasis, H, tau: float, epsilon: float, base: str = "pxp",
                  sectors=("0", "pi")) -> list[tuple[EffectiveModel, MomentumSector]]:
    """Effective models restricted to translation sectors k = 0 and k = pi."""
    N = operators.build_number(basis)
    out = []
    for k in sectors:
        sec = hilbert.build_momentum_sector(basis, k)
        Hk = sec.project_operator(H)
        Nk = sec.project_operator(N)
        out.append((build_effective_model(Hk, Nk, tau, epsilon, base, sec.k), sec))
    return out


@dataclass
class PairingReport:
    tau: float
    quasi_energies: np.ndarray
    overlaps: np.ndarray
    top_pair_gap: float

    def rows(self):
        for e, o in zip(self.quasi_energies, self.overlaps):
            yield self.tau, float(e), float(o)


def top_pair_gap(phases: np.ndarray, overlaps: np.ndarray) -> float:
    """Phase distance in [0, pi] between the two largest-overlap eigenstates."""
    order = np.lexsort((phases, -overlaps))
    a, b = phases[order[0]], phases[order[1]]
    return float(abs(_wrap(a - b)))


def pairing_report(models, psi_ref: np.ndarray) -> PairingReport:
    """Quasi-energies and reference overlaps collected over one or more (model, sector) pairs.

    ``models`` is a list of ``(EffectiveModel, MomentumSector | None)``.
    """
    phases, overlaps = [], []
    for model, sec in models:
        ph, W = model.quasi_energies
        ref = sec.project(psi_ref) if sec is not None else psi_ref
        phases.append(ph)
        overlaps.append(np.abs(W.conj().T @ ref) ** 2)
    phases = np.concatenate(phases)
    overlaps = np.concatenate(overlaps)
    return PairingReport(models[0][0].tau, phases, overlaps, top_pair_gap(phases, overlaps))


def pairing_scan(basis: SpinBasis, H, taus, epsilon: float, psi_ref: np.ndarray | None = None,
                 base: str = "pxp", use_sectors: bool = True) -> list[PairingReport]:
    """U_F1 spectra and |Z2> overlaps over a grid of periods."""
    if psi_ref is None:
        psi_ref, _ = hilbert.neel_states(basis)
    reports = []
    for tau in taus:
        if use_sectors:
            models = sector_models(basis, H, tau, epsilon, base)
        else:
            models = [(build_effective_model(H, operators.build_number(basis), tau, epsilon, base), None)]
        reports.append(pairing_report(models, psi_ref))
    return reports


def write_pairing_csv(reports, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["tau", "quasi_energy", "overlap"])
    for rep in reports:
        for tau, e, o in rep.rows():
            w.writerow([repr(float(tau)), repr(e), repr(o)])


@dataclass
class GroundManifold:
    levels: np.ndarray
    labels: list[tuple[float, complex]]
    delta_E: float
    gap: float
    states: list[np.ndarray] = field(repr=False, default_factory=list)
    cat_overlaps: np.ndarray | None = None


def cat_states(basis: SpinBasis) -> tuple[np.ndarray, np.ndarray]:
    z2, z2p = hilbert.neel_states(basis)
    return (z2 + z2p) / np.sqrt(2), (z2 - z2p) / np.sqrt(2)


def ground_manifold(models, n_levels: int = 6, basis: SpinBasis | None = None,
                    doublet: str = "ground") -> GroundManifold:
    """Lowest H_F1 levels over the given sectors with (k, X_tau) labels.

    ``doublet="ground"`` takes the two lowest levels; ``doublet="neel"`` takes the
    two eigenstates with the largest cat-state overlap, which is the relevant pair
    when the H_F1 ground state is not Neel-like (Rydberg base). delta_E is the
    doublet splitting and ``gap`` the distance from the doublet's lower level to
    the next level above the doublet.
    """
    entries = []
    for model, sec in models:
        E, W, x = model.hf1_spectrum
        full = sec.isometry @ W if sec is not None else W
        for i in range(len(E)):
            entries.append((float(E[i]), model.k, complex(x[i]), full[:, i]))
    entries.sort(key=lambda e: e[0])
    levels = np.array([e[0] for e in entries])
    cat_ov = None
    if basis is not None:
        plus, minus = cat_states(basis)
        cats = np.column_stack([plus, minus])
        cat_ov = np.array([np.max(np.abs(cats.conj().T @ e[3]) ** 2) for e in entries])
    if doublet == "ground":
        pair = [0, 1]
    elif doublet == "neel":
        if cat_ov is None:
            raise ValueError("doublet='neel' needs the basis")
        pair = sorted(np.argsort(-cat_ov, kind="stable")[:2].tolist())
    else:
        raise ValueError(f"unknown doublet selection {doublet!r}")
    i0, i1 = pair
    delta_E = levels[i1] - levels[i0]
    above = [i for i in range(len(levels)) if i > i1 or (i > i0 and i not in pair)]
    gap = levels[above[0]] - levels[i0] if above else np.inf
    keep = sorted(set(range(min(n_levels, len(levels)))) | set(pair))
    return GroundManifold(
        levels[keep], [(entries[i][1], entries[i][2]) for i in keep], float(delta_E), float(gap),
        [entries[i][3] for i in pair], cat_ov[pair] if cat_ov is not None else None,
    )


@dataclass(frozen=True)
class SplittingFit:
    Ls: tuple
    splittings: tuple
    slope: float
    intercept: float
    r_squared: float
    residual: float


def fit_log_splitting(Ls, splittings) -> SplittingFit:
    """Least-squares line through (L, ln dE); entries below the numerical floor are dropped."""
    Ls = np.asarray(Ls, dtype=float)
    dE = np.asarray(splittings, dtype=float)
    ok = dE > SPLITTING_FLOOR
    if not ok.all():
        warnings.warn(f"dropping splittings below {SPLITTING_FLOOR:g} at L={Ls[~ok].astype(int).tolist()}")
    x, y = Ls[ok], np.log(dE[ok])
    if len(x) < 2:
        raise ValueError("need at least two usable splittings for a fit")
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return SplittingFit(tuple(Ls.astype(int).tolist()), tuple(dE.tolist()), float(slope),
                        float(intercept), r2, ss_res)


def _base_hamiltonian(hamiltonian: str, L: int, **kw):
    spec = dynamics.DriveSpec(L, 0.0, 1.0, hamiltonian=hamiltonian, **kw)
    basis = dynamics.model_basis(hamiltonian, L, spec.boundary)
    return basis, dynamics.build_hamiltonian(spec, basis)


def splitting_scaling(Ls, tau: float, hamiltonian: str = "pxp", epsilon: float = 1.0,
                      doublet: str = "ground", **kw) -> SplittingFit:
    """Ground-doublet splitting of H_F1 against system size."""
    if any(L % 2 for L in Ls):
        raise ValueError(f"splitting scaling needs even L, got {list(Ls)}")
    dEs = []
    for L in Ls:
        basis, H = _base_hamiltonian(hamiltonian, L, **kw)
        gm = ground_manifold(sector_models(basis, H, tau, epsilon, hamiltonian), basis=basis,
                             doublet=doublet)
        dEs.append(gm.delta_E)
    return fit_log_splitting(Ls, dEs)


def _refine_peak(power: np.ndarray, k: int) -> float:
    """Fractional bin of a local maximum by a parabola through three points."""
    if not 0 < k < power.size - 1:
        return float(k)
    a, b, c = power[k - 1], power[k], power[k + 1]
    denom = a - 2 * b + c
    shift = 0.5 * (a - c) / denom if denom else 0.0
    return k + float(np.clip(shift, -0.5, 0.5))


def spectral_line(series, f_min: float, f_max: float, pad: int = 4) -> float:
    """Frequency (cycles per sample) of the strongest spectral peak within [f_min, f_max]."""
    y = np.asarray(series, dtype=float)
    y = y - y.mean()
    nfft = pad * y.size
    power = np.abs(np.fft.rfft(y, nfft)) ** 2
    f = np.arange(power.size) / nfft
    band = np.nonzero((f >= f_min) & (f <= f_max))[0]
    k = int(band[np.argmax(power[band])])
    return _refine_peak(power, k) / nfft


def beat_period(series, spacing: float = 1.0, pad: int = 4, floor_ratio: float = 3.0):
    """Period of the dominant nonzero frequency of a sampled series.

    Uses a ``pad``-fold zero-padded transform with parabolic peak interpolation.
    Returns ``(period, peak_to_median)``; the period is None when the peak is
    below ``floor_ratio`` times the median power.
    """
    y = np.asarray(series, dtype=float)
    scale = float(np.abs(y).max()) if y.size else 0.0
    y = y - y.mean()
    n = y.size
    if np.dot(y, y) <= (1e-12 * scale) ** 2 * n:
        return None, 0.0
    nfft = pad * n
    power = np.abs(np.fft.rfft(y, nfft)) ** 2
    # skip the zero-frequency lobe of the padded transform
    lo = pad
    if power.size <= lo + 2:
        return None, 0.0
    inner = power[lo:-1]
    peaks = np.nonzero((inner >= power[lo - 1:-2]) & (inner >= power[lo + 1:]))[0] + lo
    if peaks.size == 0:
        return None, 0.0
    k = int(peaks[np.argmax(power[peaks])])
    median = float(np.median(power[1:]))
    ratio = float(power[k] / median) if median > 0 else np.inf
    if ratio < floor_ratio:
        return None, ratio
    freq = _refine_peak(power, k) / nfft
    return spacing / freq, ratio


def fidelity_crossing(f_even, f_odd, smooth: int = 1) -> float | None:
    """First index where the (moving-average smoothed) even-period fidelity drops below the odd one."""
    a = np.asarray(f_even, dtype=float)
    b = np.asarray(f_odd, dtype=float)
    n = min(a.size, b.size)
    d = a[:n] - b[:n]
    if smooth > 1:
        d = np.convolve(d, np.ones(smooth) / smooth, mode="valid")
        offset = (smooth - 1) / 2
    else:
        offset = 0.0
    for i in range(1, d.size):
        if d[i - 1] > 0 >= d[i]:
            return float(offset + i - 1 + d[i - 1] / (d[i - 1] - d[i]))
    return None


@dataclass
class TimescaleReport:
    tau: float
    T_s: float
    T_b: float | None
    T_g: float | None
    T_g_dyn: float | None
    delta_E: float
    gap: float
    beat_peak_ratio: float

    def as_periods(self) -> dict[str, float | None]:
        conv = lambda T: None if T is None else T / self.tau
        return {"T_s": conv(self.T_s), "T_b": conv(self.T_b), "T_g": conv(self.T_g),
                "T_g_dyn": conv(self.T_g_dyn)}


def quasienergy_splitting(report: PairingReport, epsilon: float) -> float:
    """Doublet splitting in H_F1 units from the deviation of the top-overlap pair from pi.

    For an involutive X_tau this equals the H_F1 level splitting of that pair.
    """
    return (np.pi - report.top_pair_gap) / abs(epsilon)


def extract_timescales(fidelity, tau: float, epsilon: float, delta_E: float | None = None,
                       gap: float | None = None, smooth: int = 1) -> TimescaleReport:
    """Timescales from a stroboscopic fidelity series F_0, F_1, ... (all in time units).

    T_b comes from the even-period series F_{2n}; T_g from the doublet splitting as
    pi / (2 |epsilon| dE) periods; T_g_dyn from the first crossing of F_{2n} and F_{2n+1}.
    """
    F = np.asarray(fidelity, dtype=float)
    f_even, f_odd = F[0::2], F[1::2]
    period, ratio = beat_period(f_even, spacing=2 * tau)
    T_g = None
    if delta_E is not None and delta_E > 0 and epsilon != 0:
        T_g = np.pi / (2 * abs(epsilon) * delta_E) * tau
    dE = np.nan if delta_E is None else delta_E
    gap = np.nan if gap is None else gap
    cross = fidelity_crossing(f_even, f_odd, smooth)
    T_g_dyn = None if cross is None else 2 * tau * cross
    return TimescaleReport(tau, 2 * tau, period, T_g, T_g_dyn, float(dE), float(gap), ratio)
