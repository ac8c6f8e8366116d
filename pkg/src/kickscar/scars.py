"""FSA scar subspace, collective spin operators and Bloch-sphere trajectories."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import dynamics, hilbert, operators
from .hilbert import SpinBasis
from .operators import DeformationParams

GS_TOL = 1e-12


class FSAError(RuntimeError):
    pass


@dataclass
class ScarSubspace:
    """(L+1)-dimensional span of |Z2>, H+|Z2>, ..., |Z2'>.

    ``vectors`` has the orthonormal basis as columns. Spin matrices are stored
    in subspace coordinates; ``sandwich`` lifts them to K S K on the full space.
    """

    basis: SpinBasis
    vectors: np.ndarray
    Sz: np.ndarray
    Sx: np.ndarray
    Sy: np.ndarray
    sx_scale: float
    normalization: str
    params: DeformationParams

    @property
    def spin(self) -> float:
        return self.basis.L / 2

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def projector(self) -> np.ndarray:
        V = self.vectors
        return V @ V.conj().T

    def project(self, psi: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ psi

    def sandwich(self, S: np.ndarray) -> np.ndarray:
        V = self.vectors
        return V @ S @ V.conj().T

    def restrict(self, op) -> np.ndarray:
        """Matrix of K op K in subspace coordinates."""
        V = self.vectors
        return V.conj().T @ (op @ V)

    def expect(self, S: np.ndarray, psi: np.ndarray) -> float:
        """<psi| K S K |psi> evaluated without forming the full matrix."""
        c = self.project(psi)
        return float(np.vdot(c, S @ c).real)

    @property
    def S_plus(self) -> np.ndarray:
        return self.Sx + 1j * self.Sy

    @property
    def S_minus(self) -> np.ndarray:
        return self.Sx - 1j * self.Sy


def fsa_vectors(basis: SpinBasis, h_plus) -> np.ndarray:
    """Orthonormalized Krylov chain of H+ from |Z2> (two-pass modified Gram-Schmidt)."""
    L = basis.L
    z2, _ = hilbert.neel_states(basis)
    vecs = [z2.astype(complex)]
    for k in range(L):
        w = h_plus @ vecs[-1]
        for _ in range(2):
            for v in vecs:
                w = w - np.vdot(v, w) * v
        norm = np.linalg.norm(w)
        if norm < GS_TOL:
            raise FSAError(f"FSA chain terminated early after {k + 1} vectors")
        vecs.append(w / norm)
    return np.column_stack(vecs)


def spectral_scale(raw: np.ndarray, spin: float) -> float:
    """Least-squares factor c mapping the sorted spectrum of ``raw`` onto -spin..spin."""
    lam = np.linalg.eigvalsh(raw)
    target = np.arange(-spin, spin + 1)
    return float(np.dot(lam, target) / np.dot(lam, lam))


def build_scar_subspace(basis: SpinBasis, params: DeformationParams | None = None,
                        normalization: str = "spectral", tau_tilde: float | None = None) -> ScarSubspace:
    """Scar subspace and collective spin matrices.

    normalization:
        ``"spectral"`` scales K(H+ + H-)K so its spectrum best matches -L/2..L/2;
        ``"literal"`` divides by 2 tau_tilde (revival period of the deformed model,
        calibrated when not given).
    """
    params = params or DeformationParams()
    h_plus, h_minus = operators.build_deformed_ladders(basis, params)
    V = fsa_vectors(basis, h_plus)
    sz_micro = operators.build_collective_sz(basis)
    Sz = V.conj().T @ (sz_micro @ V)
    raw = V.conj().T @ ((h_plus + h_minus) @ V)
    raw = 0.5 * (raw + raw.conj().T)
    if normalization == "spectral":
        scale = spectral_scale(raw, basis.L / 2)
    elif normalization == "literal":
        if tau_tilde is None:
            H = (h_plus + h_minus).tocsr()
            tau_tilde = dynamics.calibrate_tau_r(H, V[:, 0])
        scale = 1.0 / (2 * tau_tilde)
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    Sx = scale * raw
    Sy = 1j * (Sx @ Sz - Sz @ Sx)
    return ScarSubspace(basis, V, Sz, Sx, Sy, scale, normalization, params)


def closure_residuals(sub: ScarSubspace) -> dict[str, float]:
    """Max-norm deviations from the su(2) algebra inside the subspace."""
    Sz, Sp, Sm = sub.Sz, sub.S_plus, sub.S_minus
    return {
        "sz_splus": float(np.abs(Sz @ Sp - Sp @ Sz - Sp).max()),
        "sz_sminus": float(np.abs(Sz @ Sm - Sm @ Sz + Sm).max()),
        "splus_sminus": float(np.abs(Sp @ Sm - Sm @ Sp - 2 * Sz).max()),
    }


@dataclass(frozen=True)
class NumberProjection:
    c0: float
    c2: float
    c4: float
    off_diagonal: float
    residual: float
    c6: float | None = None


def project_number_operator(sub: ScarSubspace, N=None, include_m6: bool = False) -> NumberProjection:
    """Fit diag(K N K) to c0 + c2 m^2/L + c4 m^4/L^3 (+ c6 m^6/L^5), m the Sz eigenvalue.

    ``residual`` is the largest absolute deviation of the fit on the L+1 diagonal entries.
    """
    L = sub.basis.L
    N = operators.build_number(sub.basis) if N is None else N
    M = sub.restrict(N)
    off = M - np.diag(np.diag(M))
    d = np.diag(M).real
    m = np.diag(sub.Sz).real
    cols = [np.ones_like(m), m**2 / L, m**4 / L**3]
    if include_m6:
        cols.append(m**6 / L**5)
    A = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(A, d, rcond=None)
    resid = float(np.abs(A @ coef - d).max())
    return NumberProjection(float(coef[0]), float(coef[1]), float(coef[2]),
                            float(np.abs(off).max()), resid,
                            float(coef[3]) if include_m6 else None)


@dataclass(frozen=True)
class BlochPoint:
    t: float
    x: float
    y: float
    z: float
    parity: int

    @property
    def radius(self) -> float:
        return float(np.sqrt(self.x**2 + self.y**2 + self.z**2))


def bloch_trajectory(spec: dynamics.DriveSpec, psi0: np.ndarray, sub: ScarSubspace,
                     sampling: str = "stroboscopic", substeps: int = 20) -> list[BlochPoint]:
    """Normalized collective-spin expectations along a drive."""
    s = sub.spin
    obs = {
        "x": lambda psi: sub.expect(sub.Sx, psi) / s,
        "y": lambda psi: sub.expect(sub.Sy, psi) / s,
        "z": lambda psi: sub.expect(sub.Sz, psi) / s,
    }
    rec = dynamics.run_drive(spec, psi0, obs, sampling=sampling, substeps=substeps)
    out = []
    for i, t in enumerate(rec.times):
        # period index of the sample; stroboscopic points belong to the period they end
        n = int(np.floor(t / spec.tau + 1e-9))
        out.append(BlochPoint(float(t), float(rec["x"][i]), float(rec["y"][i]),
                              float(rec["z"][i]), n % 2))
    return out


def write_bloch_csv(points: list[BlochPoint], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "x", "y", "z", "parity_of_period"])
    for p in points:
        w.writerow([repr(p.t), repr(p.x), repr(p.y), repr(p.z), p.parity])
