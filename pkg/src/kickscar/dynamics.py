"""Time evolution under static Hamiltonians and kicked / finite-width drives."""
from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import hilbert, operators
from .operators import DeformationParams, RydbergParams

log = logging.getLogger(__name__)

DENSE_MAX = 6000
HAMILTONIANS = ("pxp", "deformed-pxp", "pxp+nnn", "rydberg")
PULSES = ("delta", "finite")
AMPLITUDE_MODES = ("calibrated", "raw")


class KrylovError(RuntimeError):
    """Krylov propagation did not reach the requested accuracy."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class NoRevivalError(RuntimeError):
    pass


def _lanczos_step(H, v, dt, tol, m_max):
    """One Krylov step of exp(-i H dt) v. Returns (result, error_estimate)."""
    beta0 = np.linalg.norm(v)
    if beta0 == 0:
        return np.zeros_like(v), 0.0
    n = v.shape[0]
    m_max = min(m_max, n)
    Q = np.zeros((m_max + 1, n), dtype=complex)
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)
    Q[0] = v / beta0
    err = np.inf
    for j in range(m_max):
        w = H @ Q[j]
        alpha[j] = np.vdot(Q[j], w).real
        w = w - alpha[j] * Q[j] - (beta[j - 1] * Q[j - 1] if j else 0)
        # full reorthogonalisation keeps the small basis numerically orthonormal
        w -= Q[: j + 1].T @ (Q[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        T = np.diag(alpha[: j + 1]) + np.diag(beta[:j], 1) + np.diag(beta[:j], -1)
        evals, evecs = np.linalg.eigh(T)
        y = evecs @ (np.exp(-1j * dt * evals) * evecs[0].conj())
        invariant = beta[j] < 1e-13 * max(1.0, abs(alpha[j]))
        err = 0.0 if invariant else beta0 * beta[j] * abs(y[-1])
        if err < tol or invariant or j == m_max - 1:
            return beta0 * (Q[: j + 1].T @ y), err
        Q[j + 1] = w / beta[j]
    raise AssertionError("unreachable")


def krylov_expmv(H, psi, t, tol=1e-9, m_max=40, max_substeps=100_000, dt0=None):
    """exp(-i H t) psi by Lanczos projection with adaptive substepping.

    ``tol`` bounds the estimated error of each substep.
    """
    psi = np.asarray(psi, dtype=complex)
    if t == 0:
        return psi.copy()
    sign = 1.0 if t > 0 else -1.0
    remaining = abs(t)
    dt = abs(dt0) if dt0 else remaining
    out = psi
    steps = 0
    while remaining > 1e-15 * abs(t):
        h = min(dt, remaining)
        new, err = _lanczos_step(H, out, sign * h, tol, m_max)
        steps += 1
        if steps > max_substeps:
            raise KrylovError("Krylov substep budget exhausted", err)
        if err > tol:
            dt = h / 2
            if dt < 1e-12 * abs(t):
                raise KrylovError("Krylov step size underflow", err)
            continue
        out = new
        remaining -= h
        if err < tol / 10:
            dt = h * 1.5
    return out


def _matvec(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    # avoid promoting a large real matrix to complex on every product
    if np.isrealobj(M) and np.iscomplexobj(v):
        return M @ v.real + 1j * (M @ v.imag)
    return M @ v


class Propagator:
    """exp(-i H t) by dense eigendecomposition or by Krylov projection."""

    def __init__(self, H, mode: str = "auto", dense_max: int = DENSE_MAX,
                 tol: float = 1e-9, krylov_dim: int = 40):
        if mode == "auto":
            mode = "dense" if H.shape[0] <= dense_max else "krylov"
        if mode not in ("dense", "krylov"):  # "sectors" is handled by make_propagator
            raise ValueError(f"unknown propagator mode {mode!r}")
        self.mode = mode
        self.H = H
        self.tol = tol
        self.krylov_dim = krylov_dim
        if mode == "dense":
            dense = H.toarray() if sp.issparse(H) else np.asarray(H)
            self.energies, self.vectors = np.linalg.eigh(dense)
            self._vh = np.ascontiguousarray(self.vectors.conj().T)
        else:
            self.H = sp.csr_matrix(H)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def evolve(self, psi, t: float) -> np.ndarray:
        if self.mode == "dense":
            c = np.exp(-1j * t * self.energies) * _matvec(self._vh, psi)
            return _matvec(self.vectors, c)
        return krylov_expmv(self.H, psi, t, tol=self.tol, m_max=self.krylov_dim)

    def unitary(self, t: float) -> np.ndarray:
        if self.mode != "dense":
            raise ValueError("explicit unitaries need a dense propagator")
        V = self.vectors
        return (V * np.exp(-1j * t * self.energies)) @ V.conj().T


@lru_cache(maxsize=16)
def _sectors(basis: hilbert.SpinBasis):
    return hilbert.all_momentum_sectors(basis)


class BlockPropagator:
    """Propagator of a translation-invariant H assembled from momentum-sector blocks."""

    mode = "sectors"

    def __init__(self, H, basis: hilbert.SpinBasis, dense_max: int = DENSE_MAX,
                 tol: float = 1e-9, krylov_dim: int = 40):
        self.H = H
        self.sectors = _sectors(basis)
        self.blocks = []
        for sec in self.sectors:
            Hk = sec._adjoint @ (H @ sec.isometry)
            self.blocks.append(Propagator(Hk, "auto", dense_max, tol, krylov_dim))

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def energies(self) -> np.ndarray:
        return np.sort(np.concatenate([b.energies for b in self.blocks]))

    def evolve(self, psi, t: float) -> np.ndarray:
        out = np.zeros(self.dim, dtype=complex)
        for sec, block in zip(self.sectors, self.blocks):
            phi = sec.project(psi)
            if np.any(phi):
                out += sec.unproject(block.evolve(phi, t))
        return out

    def unitary(self, t: float) -> np.ndarray:
        U = np.zeros((self.dim, self.dim), dtype=complex)
        for sec, block in zip(self.sectors, self.blocks):
            B = sec.isometry.toarray()
            U += B @ block.unitary(t) @ B.conj().T
        return U


def make_propagator(H, basis: hilbert.SpinBasis, mode: str = "auto"):
    """``auto`` uses translation blocks on periodic chains, otherwise dense or Krylov by size."""
    if mode == "sectors" or (mode == "auto" and basis.boundary == "periodic" and basis.L >= 4):
        return BlockPropagator(H, basis)
    return Propagator(H, mode=mode)


def evolve_static(H, psi, t: float, mode: str = "auto", **kwargs) -> np.ndarray:
    return Propagator(H, mode=mode, **kwargs).evolve(psi, t)


@dataclass(frozen=True)
class DriveSpec:
    """Kicked drive H(t) = H_0 + theta N sum_k delta(t - k tau), or its finite-width version."""

    L: int
    theta: float
    tau: float
    hamiltonian: str = "pxp"
    n_periods: int = 1
    pulse: str = "delta"
    pulse_width: float = 0.0
    amplitude_mode: str = "calibrated"
    nnn: float = 0.0
    boundary: str = "periodic"
    deformation: DeformationParams = field(default_factory=DeformationParams)
    rydberg: RydbergParams = field(default_factory=RydbergParams)
    mode: str = "auto"

    def __post_init__(self):
        if self.hamiltonian not in HAMILTONIANS:
            raise ValueError(f"hamiltonian must be one of {HAMILTONIANS}")
        if self.pulse not in PULSES:
            raise ValueError(f"pulse must be one of {PULSES}")
        if self.amplitude_mode not in AMPLITUDE_MODES:
            raise ValueError(f"amplitude_mode must be one of {AMPLITUDE_MODES}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.pulse == "finite" and not 0 < self.pulse_width < self.tau:
            raise ValueError("finite-width pulses need 0 < pulse_width < tau")
        if self.n_periods < 0:
            raise ValueError("n_periods must be non-negative")

    @property
    def epsilon(self) -> float:
        return np.pi - self.theta

    def replace(self, **changes) -> "DriveSpec":
        return dataclasses.replace(self, **changes)

    def describe(self) -> list[str]:
        out = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if dataclasses.is_dataclass(value):
                value = ", ".join(f"{k}={v!r}" for k, v in dataclasses.asdict(value).items())
            out.append(f"{f.name} = {value}")
        return out


@lru_cache(maxsize=16)
def model_basis(hamiltonian: str, L: int, boundary: str = "periodic") -> hilbert.SpinBasis:
    if hamiltonian == "rydberg":
        return hilbert.full_basis(L, boundary)
    return hilbert.enumerate_constrained(L, boundary)


def build_hamiltonian(spec: DriveSpec, basis: hilbert.SpinBasis | None = None) -> sp.csr_matrix:
    basis = basis or model_basis(spec.hamiltonian, spec.L, spec.boundary)
    if spec.hamiltonian == "pxp":
        return operators.build_pxp(basis)
    if spec.hamiltonian == "deformed-pxp":
        return operators.build_deformed_pxp(basis, spec.deformation)
    if spec.hamiltonian == "pxp+nnn":
        return (operators.build_pxp(basis) + operators.build_nnn_perturbation(basis, spec.nnn)).tocsr()
    return operators.build_rydberg(basis, spec.rydberg)


def _static_key(spec: DriveSpec):
    return (spec.hamiltonian, spec.L, spec.boundary, spec.nnn if spec.hamiltonian == "pxp+nnn" else 0.0,
            spec.deformation if spec.hamiltonian == "deformed-pxp" else None,
            spec.rydberg if spec.hamiltonian == "rydberg" else None, spec.mode)


@lru_cache(maxsize=8)
def _static_parts(key):
    hamiltonian, L, boundary, nnn, deformation, rydberg, mode = key
    spec = DriveSpec(L, 0.0, 1.0, hamiltonian=hamiltonian, boundary=boundary, nnn=nnn,
                     deformation=deformation or DeformationParams(),
                     rydberg=rydberg or RydbergParams(), mode=mode)
    basis = model_basis(hamiltonian, L, boundary)
    H = build_hamiltonian(spec, basis)
    N = operators.build_number(basis)
    return basis, H, N, make_propagator(H, basis, mode)


class Drive:
    """Executable form of a ``DriveSpec`` with cached propagators."""

    def __init__(self, spec: DriveSpec):
        self.spec = spec
        self.basis, self.H, self.N, self.static = _static_parts(_static_key(spec))
        self.n_diag = np.asarray(self.N.diagonal())
        self.kick = np.exp(-1j * spec.theta * self.n_diag)
        self.pulsed = None
        if spec.pulse == "finite":
            amp = spec.theta / spec.pulse_width if spec.amplitude_mode == "calibrated" else spec.theta
            self.pulsed = make_propagator((self.H + amp * self.N).tocsr(), self.basis, spec.mode)

    @property
    def static_duration(self) -> float:
        return self.spec.tau - (self.spec.pulse_width if self.pulsed else 0.0)

    def step(self, psi: np.ndarray) -> np.ndarray:
        """One drive period."""
        if self.pulsed is None:
            return self.kick * self.static.evolve(psi, self.spec.tau)
        half = self.spec.pulse_width / 2
        psi = self.pulsed.evolve(psi, half)
        psi = self.static.evolve(psi, self.static_duration)
        return self.pulsed.evolve(psi, half)

    def micromotion(self, psi: np.ndarray, substeps: int):
        """Yield (time offset within the period, state); the last entry is the full period."""
        tau = self.spec.tau
        dt = self.static_duration / substeps
        if self.pulsed is None:
            for j in range(1, substeps):
                psi = self.static.evolve(psi, dt)
                yield j * dt, psi
            yield tau, self.kick * self.static.evolve(psi, dt)
            return
        half = self.spec.pulse_width / 2
        psi = self.pulsed.evolve(psi, half)
        for j in range(1, substeps + 1):
            psi = self.static.evolve(psi, dt)
            yield half + j * dt, psi
        yield tau, self.pulsed.evolve(psi, half)

    def unitary(self) -> np.ndarray:
        """Dense one-period Floquet unitary."""
        if self.pulsed is None:
            return self.kick[:, None] * self.static.unitary(self.spec.tau)
        half = self.pulsed.unitary(self.spec.pulse_width / 2)
        return half @ self.static.unitary(self.static_duration) @ half


@lru_cache(maxsize=32)
def get_drive(spec: DriveSpec) -> Drive:
    return Drive(spec)


def floquet_step(spec: DriveSpec, psi: np.ndarray) -> np.ndarray:
    return get_drive(spec).step(psi)


def floquet_unitary(spec: DriveSpec) -> np.ndarray:
    return get_drive(spec).unitary()


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    series: dict[str, np.ndarray]
    sampling: str
    spec: DriveSpec | None = None
    states: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for name, values in self.series.items():
            if len(values) != len(self.times):
                raise ValueError(f"series {name!r} has {len(values)} samples, expected {len(self.times)}")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.series[name]

    def to_csv(self, fh) -> None:
        if self.spec is not None:
            for line in self.spec.describe():
                fh.write(f"# {line}\n")
        fh.write(f"# sampling = {self.sampling}\n")
        names = list(self.series)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *names])
        for i, t in enumerate(self.times):
            w.writerow([repr(float(t)), *(repr(float(self.series[n][i])) for n in names)])


def standard_observable(name: str, drive: Drive, psi0: np.ndarray) -> Callable[[np.ndarray], float]:
    """Named observables: imbalance, staggered, number, entropy, fidelity, fidelity_z2p."""
    from . import observables as obs

    basis = drive.basis
    if name == "imbalance":
        d = np.asarray(operators.build_imbalance(basis).diagonal())
        return lambda psi: float(np.dot(d, np.abs(psi) ** 2))
    if name == "staggered":
        d = operators.staggered_counts(basis).astype(float)
        return lambda psi: float(np.dot(d, np.abs(psi) ** 2))
    if name == "number":
        return lambda psi: float(np.dot(drive.n_diag, np.abs(psi) ** 2))
    if name == "entropy":
        return lambda psi: obs.entanglement_entropy(psi, basis)
    if name == "fidelity":
        ref = np.array(psi0, copy=True)
        return lambda psi: obs.revival_fidelity(ref, psi)
    if name == "fidelity_z2p":
        ref = hilbert.neel_states(basis)[1]
        return lambda psi: obs.revival_fidelity(ref, psi)
    if name == "ghz":
        return lambda psi: obs.ghz_fidelity(psi, basis)
    raise KeyError(f"unknown observable {name!r}")


def _as_callable(obs_, drive, psi0):
    if isinstance(obs_, str):
        return standard_observable(obs_, drive, psi0)
    if callable(obs_):
        return obs_
    op = obs_

    def expect(psi):
        return float(np.vdot(psi, op @ psi).real)

    return expect


def run_drive(spec: DriveSpec, psi0: np.ndarray, observables=("imbalance",),
              sampling: str = "stroboscopic", every: int = 1, substeps: int = 20,
              keep_states: bool = False) -> TrajectoryRecord:
    """Apply ``spec.n_periods`` drive periods to ``psi0`` and record observables.

    ``observables`` is a sequence of names (see ``standard_observable``) or a
    mapping name -> operator / callable(psi).
    """
    drive = get_drive(spec)
    if not isinstance(observables, Mapping):
        observables = {name: name for name in observables}
    funcs = {name: _as_callable(o, drive, psi0) for name, o in observables.items()}
    psi = np.asarray(psi0, dtype=complex)
    times, states = [0.0], [psi] if keep_states else None
    values = {name: [f(psi)] for name, f in funcs.items()}

    def record(t, state):
        times.append(t)
        for name, f in funcs.items():
            values[name].append(f(state))
        if keep_states:
            states.append(state)

    for n in range(spec.n_periods):
        t0 = n * spec.tau
        if sampling == "micromotion":
            for offset, state in drive.micromotion(psi, substeps):
                record(t0 + offset, state)
            psi = state
        elif sampling == "stroboscopic":
            psi = drive.step(psi)
            if (n + 1) % every == 0:
                record(t0 + spec.tau, psi)
        else:
            raise ValueError(f"unknown sampling {sampling!r}")
    return TrajectoryRecord(
        np.array(times), {k: np.array(v) for k, v in values.items()}, sampling, spec,
        np.array(states) if keep_states else None,
    )


def calibrate_tau_r(H, psi0, t_max: float | None = None, t_min: float = 1.0,
                    guess: float = 4.74, threshold: float = 0.1, mode: str = "krylov") -> float:
    """Time of the first revival maximum of |<psi0| exp(-iHt) |psi0>|^2 after ``t_min``.

    The return probability is sampled with step ``guess / 200`` and the first
    local maximum above ``threshold`` is refined by a parabola through the
    three samples around it.
    """
    dt = guess / 200
    t_max = 2 * guess if t_max is None else t_max
    prop = Propagator(H, mode=mode)
    psi0 = np.asarray(psi0, dtype=complex)
    n = int(np.ceil(t_max / dt))
    fid = np.empty(n + 1)
    psi = psi0
    fid[0] = 1.0
    for i in range(1, n + 1):
        psi = prop.evolve(psi, dt)
        fid[i] = abs(np.vdot(psi0, psi)) ** 2
    for i in range(1, n):
        if i * dt <= t_min or fid[i] < threshold:
            continue
        if fid[i - 1] < fid[i] >= fid[i + 1]:
            curv = fid[i - 1] - 2 * fid[i] + fid[i + 1]
            shift = 0.5 * (fid[i - 1] - fid[i + 1]) / curv if curv else 0.0
            return float((i + shift) * dt)
    raise NoRevivalError(f"no revival detected above {threshold} for t in ({t_min}, {t_max}]")


def neel_revival_period(hamiltonian: str = "pxp", L: int = 16, **spec_kwargs) -> float:
    """Calibrated tau_r of |Z2> for one of the named drive Hamiltonians."""
    spec = DriveSpec(L, 0.0, 1.0, hamiltonian=hamiltonian, **spec_kwargs)
    basis = model_basis(hamiltonian, L, spec.boundary)
    H = build_hamiltonian(spec, basis)
    z2, _ = hilbert.neel_states(basis)
    guess = 4.74
    if hamiltonian == "rydberg":
        guess = 2 * 4.74 / spec.rydberg.Omega
    return calibrate_tau_r(H, z2, guess=guess)
