import io

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from kickscar import hilbert, operators as ops
from kickscar.operators import DeformationParams, RydbergParams


def dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def C_of(basis):
    return dense(ops.exp_diag_phase(ops.build_number(basis), np.pi)).real


def pxp_bruteforce(L):
    """Reference PXP from explicit bit manipulation on the full space."""
    cfg = hilbert.enumerate_constrained(L).configs
    idx = {c: i for i, c in enumerate(cfg)}
    H = np.zeros((len(cfg), len(cfg)))
    for a, s in enumerate(cfg):
        for i in range(L):
            if (s >> ((i - 1) % L)) & 1 or (s >> ((i + 1) % L)) & 1:
                continue
            H[idx[s ^ (1 << i)], a] += 1
    return H


def test_pxp_l2():
    b = hilbert.enumerate_constrained(2)
    H = dense(ops.build_pxp(b))
    v = H @ b.basis_vector(0b00)
    assert np.allclose(v, b.basis_vector(0b01) + b.basis_vector(0b10))


@pytest.mark.parametrize("L", [4, 6, 8, 10])
def test_pxp_matches_reference(L):
    b = hilbert.enumerate_constrained(L)
    H = dense(ops.build_pxp(b))
    assert np.array_equal(H, pxp_bruteforce(L))
    z2, _ = hilbert.neel_states(b)
    assert z2 @ H @ z2 == 0


def test_pxp_flippable_count_l4():
    b = hilbert.enumerate_constrained(4)
    H = dense(ops.build_pxp(b))
    assert np.abs(H[:, b.index_of(0)]).sum() == 4


def test_number_and_imbalance():
    b = hilbert.enumerate_constrained(8)
    z2, z2p = hilbert.neel_states(b)
    N = ops.build_number(b)
    I = ops.build_imbalance(b)
    assert np.allclose(N @ z2, 4 * z2)
    assert np.allclose(N @ b.basis_vector(0), 0)
    assert np.allclose(I @ z2, z2) and np.allclose(I @ z2p, -z2p)
    assert np.allclose(dense(ops.build_imbalance(b, normalized=False)), 4 * dense(I))
    assert dense(ops.build_number(hilbert.enumerate_constrained(4))).max() == 2


@pytest.mark.parametrize("L", range(4, 15))
def test_ising_identity(L):
    b = hilbert.enumerate_constrained(L)
    N = ops.build_number(b).diagonal()
    zz = ops.build_sigma_z_sum_zz(b).diagonal()
    occ = b.occupations.astype(float)
    bonds = sum(occ[:, i] * occ[:, (i + 1) % L] for i in range(L))
    assert np.abs(N - (occ.sum(axis=1) - bonds)).max() < 1e-12
    # every bond contributes 1 - 2 n_i - 2 n_{i+1}, so sum zz = L - 4N
    assert np.abs(N - (L / 4 - zz / 4)).max() < 1e-12


@pytest.mark.parametrize("L", [6, 8, 10, 12])
def test_particle_hole_antisymmetry(L):
    b = hilbert.enumerate_constrained(L)
    C = C_of(b)
    for H in (ops.build_pxp(b), ops.build_deformed_pxp(b)):
        Hd = dense(H)
        assert np.abs(C @ Hd + Hd @ C).max() < 1e-12


def test_deformed_limits():
    b = hilbert.enumerate_constrained(8)
    hp, hm = ops.build_deformed_ladders(b, DeformationParams(0.0))
    assert np.array_equal(dense(hp + hm), dense(ops.build_pxp(b)))
    assert np.isclose(DeformationParams().coefficients()[2], 0.051)
    coeffs = list(DeformationParams().coefficients().values())
    assert all(a > c for a, c in zip(coeffs, coeffs[1:]))
    hp, hm = ops.build_deformed_ladders(b)
    assert np.allclose(dense(hm), dense(hp).conj().T)
    E = np.linalg.eigvalsh(dense(ops.build_deformed_pxp(b)))
    assert np.allclose(np.sort(E), np.sort(-E), atol=1e-10)


def test_ladder_carries_z2_to_z2p():
    b = hilbert.enumerate_constrained(8)
    hp, _ = ops.build_deformed_ladders(b)
    z2, z2p = hilbert.neel_states(b)
    v = z2.copy()
    for _ in range(8):
        v = hp @ v
    v /= np.linalg.norm(v)
    assert abs(v @ z2p) > 0.99


def test_nnn():
    b = hilbert.enumerate_constrained(8)
    z2, _ = hilbert.neel_states(b)
    assert np.allclose(ops.build_nnn_perturbation(b, 0.3) @ z2, 0.3 * 4 * z2)
    assert np.allclose(ops.build_nnn_perturbation(b, 0.3) @ b.basis_vector(0), 0)
    assert ops.build_nnn_perturbation(b, 0.0).count_nonzero() == 0


def test_rydberg_free_spins():
    b = hilbert.full_basis(6)
    H = dense(ops.build_rydberg(b, RydbergParams(1.0, 0.0, 0.0, 0.0)))
    assert np.isclose(np.linalg.eigvalsh(H)[0], -3.0)


def test_rydberg_defaults_and_neel_diagonal():
    p = RydbergParams()
    assert p.V1 == 10 and p.V2 == 10 / 64 and p.delta == p.V2
    b = hilbert.full_basis(4)
    H = dense(ops.build_rydberg(b, p))
    i = b.index_of(0b0101)
    # two excitations, each with its second neighbour occupied on both sides (4 ring pairs, L = 4 double count)
    assert np.isclose(H[i, i], -2 * p.delta + 2 * p.V2)
    assert ops.hermiticity_error(ops.build_rydberg(b, p)) == 0


def test_rydberg_strong_blockade_approaches_pxp():
    L = 8
    p = RydbergParams(1.0, 1e3, 0.0, 0.0)
    Hry = dense(ops.build_rydberg(hilbert.full_basis(L), p))
    low = np.linalg.eigvalsh(Hry)[:5]
    pxp = np.linalg.eigvalsh(dense(ops.build_pxp(hilbert.enumerate_constrained(L))) / 2)[:5]
    assert np.allclose(low, pxp, atol=0.05)


def test_exp_diag_phase():
    b = hilbert.enumerate_constrained(8)
    N = ops.build_number(b)
    assert np.allclose(dense(ops.exp_diag_phase(N, 0.0)), np.eye(b.dim))
    assert np.allclose(dense(ops.exp_diag_phase(N, 2 * np.pi)), np.eye(b.dim))
    C = dense(ops.exp_diag_phase(N, np.pi))
    assert np.allclose(np.abs(np.diag(C).real), 1) and np.allclose(np.diag(C).imag, 0, atol=1e-12)
    with pytest.raises(ValueError):
        ops.exp_diag_phase(ops.build_pxp(b), 1.0)


@given(st.floats(-10, 10, allow_nan=False))
@settings(max_examples=30, deadline=None)
def test_exp_diag_phase_unitary(angle):
    b = hilbert.enumerate_constrained(6)
    U = dense(ops.exp_diag_phase(ops.build_number(b), angle))
    assert np.allclose(U.conj().T @ U, np.eye(b.dim))


@pytest.mark.parametrize("build", [ops.build_pxp, ops.build_deformed_pxp, ops.build_number,
                                   lambda b: ops.build_nnn_perturbation(b, 0.2)])
def test_translation_invariance(build):
    b = hilbert.enumerate_constrained(10)
    T = hilbert.translation_matrix(b)
    M = dense(build(b))
    assert np.abs(dense(T.T @ build(b) @ T) - M).max() < 1e-12
    assert ops.hermiticity_error(build(b)) < 1e-12


def test_rydberg_translation_invariance():
    b = hilbert.full_basis(8)
    T = hilbert.translation_matrix(b)
    H = ops.build_rydberg(b)
    assert np.abs(dense(T.T @ H @ T) - dense(H)).max() < 1e-12


def test_triplet_roundtrip():
    b = hilbert.enumerate_constrained(8)
    H = ops.build_deformed_pxp(b)
    buf = io.StringIO()
    ops.export_triplets(H, buf, b)
    buf.seek(0)
    H2, h = ops.read_triplets(buf)
    assert h == b.hash()
    assert np.array_equal(dense(H2), dense(H))
