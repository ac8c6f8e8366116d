"""Computational bases for L-site spin chains.

Configurations are stored as integers. Site ``i`` (1-based, as in the physics
literature) is bit ``i - 1``; "odd sites" are therefore bits 0, 2, 4, ...
Bit value 1 means the site is excited (Rydberg state), 0 means ground state.
This is the single place where the convention is fixed; the sign of the
imbalance and the identity of the Neel states |Z2>, |Z2'> follow from it.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

BOUNDARIES = ("periodic", "open")


def translate_configs(configs: np.ndarray, L: int, shift: int = 1) -> np.ndarray:
    """Cyclically move every excitation from site i to site i + shift."""
    c = np.asarray(configs, dtype=np.int64)
    shift %= L
    if shift == 0:
        return c.copy()
    mask = (1 << L) - 1
    return ((c << shift) & mask) | (c >> (L - shift))


def _blockade_ok(configs: np.ndarray, L: int, boundary: str) -> np.ndarray:
    c = np.asarray(configs, dtype=np.int64)
    if boundary == "periodic":
        return (c & translate_configs(c, L, 1)) == 0
    return (c & (c >> 1)) == 0


class SpinBasis:
    """Common interface of the constrained and unconstrained bases."""

    L: int
    configs: np.ndarray
    boundary: str

    @property
    def dim(self) -> int:
        return len(self.configs)

    def __len__(self) -> int:
        return self.dim

    @cached_property
    def occupations(self) -> np.ndarray:
        """``(dim, L)`` array of site occupations, column ``i`` is site ``i + 1``."""
        sites = np.arange(self.L, dtype=np.int64)
        return ((self.configs[:, None] >> sites[None, :]) & 1).astype(np.int8)

    @cached_property
    def index(self) -> dict:
        return {int(c): i for i, c in enumerate(self.configs)}

    def indices_of(self, configs) -> np.ndarray:
        """Ordinals of ``configs``; -1 for configurations outside the basis."""
        configs = np.asarray(configs, dtype=np.int64)
        pos = np.searchsorted(self.configs, configs)
        pos = np.clip(pos, 0, self.dim - 1)
        found = self.configs[pos] == configs
        return np.where(found, pos, -1)

    def index_of(self, config: int) -> int:
        i = int(self.indices_of([config])[0])
        if i < 0:
            raise KeyError(f"configuration {config:#b} is not in the basis")
        return i

    def bitstring(self, i: int) -> str:
        """Site-ordered occupation string of basis state ``i`` (site 1 first)."""
        c = int(self.configs[i])
        return "".join(str((c >> s) & 1) for s in range(self.L))

    def basis_vector(self, config: int) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index_of(config)] = 1.0
        return v

    def hash(self) -> str:
        import hashlib

        h = hashlib.sha1()
        h.update(f"{type(self).__name__}:{self.L}:{self.boundary}:".encode())
        h.update(np.ascontiguousarray(self.configs, dtype="<i8").tobytes())
        return h.hexdigest()[:16]

    def dump_csv(self, fh=None) -> str:
        """Write ``index,bitstring`` rows; returns the text if no handle is given."""
        out = fh if fh is not None else io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["index", "bitstring"])
        for i in range(self.dim):
            w.writerow([i, self.bitstring(i)])
        return out.getvalue() if fh is None else ""


@dataclass(frozen=True, eq=False, repr=False)
class ConstrainedBasis(SpinBasis):
    """Blockade-valid configurations: no two neighbouring sites both excited."""

    L: int
    configs: np.ndarray
    boundary: str = "periodic"

    def __repr__(self) -> str:
        return f"ConstrainedBasis(L={self.L}, boundary={self.boundary!r}, dim={self.dim})"


@dataclass(frozen=True, eq=False, repr=False)
class FullBasis(SpinBasis):
    """All 2^L configurations, used for the Rydberg Hamiltonian."""

    L: int
    boundary: str = "periodic"
    configs: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "configs", np.arange(1 << self.L, dtype=np.int64))

    def __repr__(self) -> str:
        return f"FullBasis(L={self.L}, dim={self.dim})"


def enumerate_constrained(L: int, boundary: str = "periodic") -> ConstrainedBasis:
    """All blockade-valid configurations of an L-site chain, ascending."""
    if L < 2:
        raise ValueError(f"L must be >= 2, got {L}")
    if boundary not in BOUNDARIES:
        raise ValueError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")
    # Grow valid open-chain strings site by site instead of filtering 2^L.
    configs = np.array([0, 1], dtype=np.int64)
    for site in range(1, L):
        prev_free = ((configs >> (site - 1)) & 1) == 0
        configs = np.concatenate([configs, configs[prev_free] | (1 << site)])
    if boundary == "periodic":
        configs = configs[_blockade_ok(configs, L, "periodic")]
    configs.sort()
    return ConstrainedBasis(L, configs, boundary)


def full_basis(L: int, boundary: str = "periodic") -> FullBasis:
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    return FullBasis(L, boundary)


def density_wave_config(L: int, period: int, offset: int = 0) -> int:
    """Configuration with sites ``1 + offset, 1 + offset + period, ...`` excited."""
    if L % period:
        raise ValueError(f"L={L} is not a multiple of the pattern period {period}")
    return sum(1 << s for s in range(offset % period, L, period))


def neel_configs(L: int) -> tuple[int, int]:
    """Integer configurations of |Z2> (odd sites excited) and |Z2'>."""
    if L % 2:
        raise ValueError(f"no Néel state for odd L={L}")
    return density_wave_config(L, 2, 0), density_wave_config(L, 2, 1)


def neel_states(basis: SpinBasis) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors |Z2> = |1010...> and |Z2'> = |0101...> (site 1 first)."""
    z2, z2p = neel_configs(basis.L)
    return basis.basis_vector(z2), basis.basis_vector(z2p)


def density_wave_state(basis: SpinBasis, period: int, offset: int = 0) -> np.ndarray:
    """|Z_k> product state, e.g. period 4 gives |Z4> = |10001000...>."""
    return basis.basis_vector(density_wave_config(basis.L, period, offset))


def translation_matrix(basis: SpinBasis, shift: int = 1) -> sp.csr_matrix:
    """Permutation matrix T with T|c> = |c translated by ``shift`` sites>."""
    if basis.boundary != "periodic":
        raise ValueError("translation requires periodic boundary conditions")
    target = basis.indices_of(translate_configs(basis.configs, basis.L, shift))
    if np.any(target < 0):
        raise ValueError("basis is not closed under translation")
    n = basis.dim
    return sp.csr_matrix((np.ones(n), (target, np.arange(n))), shape=(n, n))


@dataclass(frozen=True, eq=False)
class MomentumSector:
    """Translation eigenspace with eigenvalue e^{ik}, k = 2 pi m / L.

    ``isometry`` has orthonormal columns, one per admissible orbit; column
    ``a`` is ``sum_l e^{-ikl} T^l |r_a> / sqrt(R_a)`` with ``R_a`` the orbit
    length of representative ``r_a``. It is real for k = 0 and k = pi.
    """

    basis: SpinBasis
    k: float
    representatives: np.ndarray
    norms: np.ndarray
    isometry: sp.csr_matrix

    @property
    def dim(self) -> int:
        return len(self.representatives)

    @cached_property
    def _adjoint(self) -> sp.csr_matrix:
        return self.isometry.conj().T.tocsr()

    def project(self, psi: np.ndarray) -> np.ndarray:
        return self._adjoint @ psi

    def unproject(self, phi: np.ndarray) -> np.ndarray:
        return self.isometry @ phi

    def project_operator(self, op) -> np.ndarray:
        out = self._adjoint @ (op @ self.isometry)
        return out.toarray() if sp.issparse(out) else np.asarray(out)


def orbits(basis: SpinBasis) -> tuple[np.ndarray, np.ndarray]:
    """Representative (minimal member) and orbit length of every basis config."""
    L = basis.L
    rots = np.stack([translate_configs(basis.configs, L, l) for l in range(L)])
    reps = rots.min(axis=0)
    same = rots[1:] == basis.configs[None, :]
    period = np.where(same.any(axis=0), same.argmax(axis=0) + 1, L)
    return reps, period


def momentum_index(k, L: int) -> int:
    """Integer m with k = 2 pi m / L (mod L); accepts "0", "pi" and floats."""
    if isinstance(k, str):
        named = {"0": 0.0, "k0": 0.0, "pi": np.pi, "kpi": np.pi}
        if k.strip().lower() not in named:
            raise ValueError(f"unknown momentum label {k!r}")
        k = named[k.strip().lower()]
    m = k * L / (2 * np.pi)
    if not np.isclose(m, round(m), atol=1e-9):
        raise ValueError(f"k = {k} is not an allowed momentum 2 pi m / {L}")
    return int(round(m)) % L


def build_momentum_sector(basis: SpinBasis, k=0.0) -> MomentumSector:
    if basis.boundary != "periodic":
        raise ValueError("momentum sectors require periodic boundary conditions")
    L = basis.L
    m = momentum_index(k, L)
    k = 2 * np.pi * m / L
    reps, period = orbits(basis)
    is_rep = reps == basis.configs
    rep_cfg = basis.configs[is_rep]
    rep_period = period[is_rep]
    # orbits of length R survive only if e^{ikR} = 1
    keep = (m * rep_period) % L == 0
    rep_cfg, rep_period = rep_cfg[keep], rep_period[keep]
    real = (2 * m) % L == 0
    rows, cols, vals = [], [], []
    for a, (r, R) in enumerate(zip(rep_cfg, rep_period)):
        members = np.array([translate_configs(r, L, l) for l in range(R)])
        if real:
            phases = np.rint(np.cos(k * np.arange(R)))
        else:
            phases = np.exp(-1j * k * np.arange(R))
        rows.extend(basis.indices_of(members))
        cols.extend([a] * R)
        vals.extend(phases / np.sqrt(R))
    dtype = float if real else complex
    iso = sp.csr_matrix((np.asarray(vals, dtype=dtype), (rows, cols)), shape=(basis.dim, len(rep_cfg)))
    return MomentumSector(basis, k, rep_cfg, np.sqrt(rep_period.astype(float)), iso)


def all_momentum_sectors(basis: SpinBasis) -> list[MomentumSector]:
    return [build_momentum_sector(basis, 2 * np.pi * m / basis.L) for m in range(basis.L)]


def embed_state(psi: np.ndarray, basis: SpinBasis) -> np.ndarray:
    """Copy amplitudes of a state over ``basis`` into the full 2^L space."""
    psi = np.asarray(psi)
    if isinstance(basis, FullBasis):
        return psi.copy()
    out = np.zeros(1 << basis.L, dtype=np.result_type(psi.dtype, complex))
    out[basis.configs] = psi
    return out


def restrict_state(psi_full: np.ndarray, basis: SpinBasis) -> np.ndarray:
    """Amplitudes of a full-space state on the configurations of ``basis``."""
    return np.asarray(psi_full)[basis.configs]
