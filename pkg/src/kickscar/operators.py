"""Hamiltonians and static operators as sparse matrices over a basis.

Every builder returns a ``scipy.sparse.csr_matrix``. Diagonal operators are
stored sparse as well so that ``exp_diag_phase`` can act on them directly.
The Pauli-z convention is sigma^z = 1 - 2n, i.e. sigma^z|ground> = +|ground>.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .hilbert import SpinBasis

GOLDEN_RATIO = (1 + np.sqrt(5)) / 2


@dataclass(frozen=True)
class DeformationParams:
    """Quasi-local dressing of the PXP ladder operators.

    h_d = h0 / (phi^(d-1) - phi^-(d-1))^2 for d = 2 .. n_max.
    """

    h0: float = 0.051
    n_max: int = 8

    @property
    def phi(self) -> float:
        return GOLDEN_RATIO

    def coefficients(self) -> dict[int, float]:
        phi = self.phi
        return {
            d: self.h0 / (phi ** (d - 1) - phi ** (-(d - 1))) ** 2
            for d in range(2, self.n_max + 1)
        }


@dataclass(frozen=True)
class RydbergParams:
    """Couplings of H_Ry; unset values follow V1 = 10 Omega, V2 = V1 / 2^6, delta = V2."""

    Omega: float = 1.0
    V1: float | None = None
    V2: float | None = None
    delta: float | None = None

    def __post_init__(self):
        if self.V1 is None:
            object.__setattr__(self, "V1", 10.0 * self.Omega)
        if self.V2 is None:
            object.__setattr__(self, "V2", self.V1 / 2**6)
        if self.delta is None:
            object.__setattr__(self, "delta", self.V2)


def _neighbour(i: int, step: int, L: int, boundary: str) -> int | None:
    j = i + step
    if boundary == "periodic":
        return j % L
    return j if 0 <= j < L else None


def _free_neighbours(basis: SpinBasis, i: int) -> np.ndarray:
    """Mask of configs whose neighbours of site ``i`` are both in the ground state.

    Missing neighbours at open ends count as free (P = identity there).
    """
    occ = basis.occupations
    free = np.ones(basis.dim, dtype=bool)
    for step in (-1, 1):
        j = _neighbour(i, step, basis.L, basis.boundary)
        if j is not None and j != i:
            free &= occ[:, j] == 0
    return free


def _assemble(basis: SpinBasis, rows, cols, vals) -> sp.csr_matrix:
    n = basis.dim
    if rows:
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    else:
        rows = cols = np.zeros(0, dtype=int)
        vals = np.zeros(0)
    m = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    return m


def _flip_terms(basis: SpinBasis, i: int, mask: np.ndarray, amp):
    """Matrix elements <c ^ 2^i| . |c> for the source configs selected by ``mask``."""
    src = np.nonzero(mask)[0]
    dst = basis.indices_of(basis.configs[src] ^ (1 << i))
    ok = dst >= 0
    amp = np.broadcast_to(amp, mask.shape)[src]
    return dst[ok], src[ok], amp[ok]


def diagonal_operator(values: np.ndarray) -> sp.csr_matrix:
    return sp.diags(np.asarray(values, dtype=float), format="csr")


def build_pxp(basis: SpinBasis) -> sp.csr_matrix:
    """H_PXP = sum_i P_{i-1} sigma^x_i P_{i+1}."""
    rows, cols, vals = [], [], []
    for i in range(basis.L):
        r, c, v = _flip_terms(basis, i, _free_neighbours(basis, i), 1.0)
        rows.append(r), cols.append(c), vals.append(v)
    return _assemble(basis, rows, cols, vals)


def build_number(basis: SpinBasis) -> sp.csr_matrix:
    """N = sum_i n_i."""
    return diagonal_operator(basis.occupations.sum(axis=1))


def site_number(basis: SpinBasis, site: int) -> sp.csr_matrix:
    """n_i for 0-based ``site``."""
    return diagonal_operator(basis.occupations[:, site % basis.L])


def staggered_counts(basis: SpinBasis) -> np.ndarray:
    """sum over odd sites of n minus sum over even sites of n, per config."""
    occ = basis.occupations.astype(np.int64)
    return occ[:, 0::2].sum(axis=1) - occ[:, 1::2].sum(axis=1)


def build_imbalance(basis: SpinBasis, normalized: bool = True) -> sp.csr_matrix:
    """Density imbalance I = (2/L) sum_i (n_{2i-1} - n_{2i}); unnormalized drops 2/L."""
    if basis.L % 2:
        raise ValueError(f"imbalance needs even L, got {basis.L}")
    d = staggered_counts(basis).astype(float)
    if normalized:
        d *= 2.0 / basis.L
    return diagonal_operator(d)


def build_collective_sz(basis: SpinBasis) -> sp.csr_matrix:
    """S^z = sum_i (n_{2i-1} - n_{2i}), the unnormalized imbalance."""
    return build_imbalance(basis, normalized=False)


def build_sigma_z_sum_zz(basis: SpinBasis) -> sp.csr_matrix:
    """sum_i sigma^z_i sigma^z_{i+1} with sigma^z = 1 - 2n."""
    sz = 1 - 2 * basis.occupations.astype(np.int64)
    L = basis.L
    total = np.zeros(basis.dim)
    for i in range(L):
        j = _neighbour(i, 1, L, basis.boundary)
        if j is not None:
            total += sz[:, i] * sz[:, j]
    return diagonal_operator(total)


def _pair_counts(basis: SpinBasis, distance: int) -> np.ndarray:
    occ = basis.occupations.astype(np.int64)
    total = np.zeros(basis.dim, dtype=np.int64)
    for i in range(basis.L):
        j = _neighbour(i, distance, basis.L, basis.boundary)
        if j is not None:
            total += occ[:, i] * occ[:, j]
    return total


def build_nnn_perturbation(basis: SpinBasis, V2: float) -> sp.csr_matrix:
    """delta H = V2 sum_i n_i n_{i+2}."""
    return diagonal_operator(V2 * _pair_counts(basis, 2))


def _dressing(basis: SpinBasis, i: int, params: DeformationParams) -> np.ndarray:
    # distances wrap around small rings; a wrap landing on site i itself is dropped
    sz = 1 - 2 * basis.occupations.astype(float)
    factor = np.ones(basis.dim)
    for d, h in params.coefficients().items():
        for step in (-d, d):
            j = _neighbour(i, step, basis.L, basis.boundary)
            if j is None or j == i:
                continue
            factor += h * sz[:, j]
    return factor


def build_deformed_ladders(
    basis: SpinBasis, params: DeformationParams | None = None
) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Dressed ladder operators (H+, H-) with H+ + H- the deformed PXP model.

    H+ de-excites odd sites and excites even sites, so it lowers the
    collective S^z by one and carries |Z2> towards |Z2'>.
    """
    if basis.boundary != "periodic" or basis.L % 2:
        raise ValueError("deformed ladders need an even periodic chain")
    params = params or DeformationParams()
    occ = basis.occupations
    rows, cols, vals = [], [], []
    for i in range(basis.L):
        # bit i is site i + 1: even bit index -> odd site -> de-excite under H+
        source_occ = 1 if i % 2 == 0 else 0
        mask = _free_neighbours(basis, i) & (occ[:, i] == source_occ)
        r, c, v = _flip_terms(basis, i, mask, _dressing(basis, i, params))
        rows.append(r), cols.append(c), vals.append(v)
    h_plus = _assemble(basis, rows, cols, vals)
    return h_plus, h_plus.T.tocsr()


def build_deformed_pxp(basis: SpinBasis, params: DeformationParams | None = None) -> sp.csr_matrix:
    h_plus, h_minus = build_deformed_ladders(basis, params)
    return (h_plus + h_minus).tocsr()


def build_rydberg(basis: SpinBasis, params: RydbergParams | None = None) -> sp.csr_matrix:
    """H_Ry = (Omega/2) sum sigma^x - delta N + sum (V1 n_i n_{i+1} + V2 n_i n_{i+2})."""
    p = params or RydbergParams()
    diag = (
        -p.delta * basis.occupations.sum(axis=1)
        + p.V1 * _pair_counts(basis, 1)
        + p.V2 * _pair_counts(basis, 2)
    ).astype(float)
    rows, cols, vals = [np.arange(basis.dim)], [np.arange(basis.dim)], [diag]
    everything = np.ones(basis.dim, dtype=bool)
    for i in range(basis.L):
        r, c, v = _flip_terms(basis, i, everything, p.Omega / 2)
        rows.append(r), cols.append(c), vals.append(v)
    return _assemble(basis, rows, cols, vals)


def is_diagonal(op) -> bool:
    m = sp.coo_matrix(op)
    return bool(np.all((m.row == m.col) | (m.data == 0)))


def exp_diag_phase(op, angle: float) -> sp.csr_matrix:
    """exp(-i * angle * op) for a diagonal ``op``."""
    if not is_diagonal(op):
        raise ValueError("exp_diag_phase requires a diagonal operator")
    d = np.asarray(sp.csr_matrix(op).diagonal())
    return sp.diags(np.exp(-1j * angle * d), format="csr")


def hermiticity_error(op) -> float:
    diff = op - op.conj().T
    if sp.issparse(diff):
        return float(abs(diff).max()) if diff.nnz else 0.0
    return float(np.abs(diff).max())


def export_triplets(op, fh, basis: SpinBasis) -> None:
    """Write ``row col re im`` lines preceded by a dimension / basis-hash header."""
    m = sp.coo_matrix(op)
    order = np.lexsort((m.col, m.row))
    fh.write(f"# dim {m.shape[0]}\n# basis {basis.hash()}\n")
    for k in order:
        z = complex(m.data[k])
        fh.write(f"{m.row[k]} {m.col[k]} {z.real:.17g} {z.imag:.17g}\n")


def read_triplets(fh) -> tuple[sp.csr_matrix, str]:
    dim, basis_hash = None, ""
    rows, cols, vals = [], [], []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(" ")
            if key == "dim":
                dim = int(value)
            elif key == "basis":
                basis_hash = value.strip()
            continue
        r, c, re_, im_ = line.split()
        rows.append(int(r)), cols.append(int(c)), vals.append(complex(float(re_), float(im_)))
    if dim is None:
        raise ValueError("missing '# dim' header")
    m = sp.coo_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(dim, dim))
    return m.tocsr(), basis_hash
