import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kickscar import dynamics, hilbert, observables as ob, operators as ops
from kickscar.dynamics import DriveSpec, TrajectoryRecord

from conftest import random_state

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@pytest.fixture(scope="module")
def b8():
    return hilbert.enumerate_constrained(8)


def test_entropy_product_and_cat(b8):
    z2, z2p = hilbert.neel_states(b8)
    assert abs(ob.entanglement_entropy(z2, b8)) < 1e-12
    assert np.isclose(ob.entanglement_entropy((z2 + z2p) / np.sqrt(2), b8), np.log(2))


def test_entropy_matches_direct_svd(rng, b8):
    psi = random_state(rng, b8.dim)
    full = hilbert.embed_state(psi, b8)
    # independent route: reduced density matrix of sites 1..3 by partial trace
    L, cut = 8, 3
    tensor = full.reshape([2] * L)  # axis 0 is site L, axis L-1 is site 1
    A = tensor.reshape(2 ** (L - cut), 2 ** cut)
    rho = A.T @ A.conj()
    p = np.linalg.eigvalsh(rho)
    p = p[p > 1e-15]
    assert np.isclose(ob.entanglement_entropy(psi, b8, cut=3), -np.sum(p * np.log(p)))


def test_page_value(rng):
    fb = hilbert.full_basis(8)
    S = [ob.entanglement_entropy(random_state(rng, fb.dim), fb) for _ in range(20)]
    assert abs(np.mean(S) - (4 * np.log(2) - 0.5)) < 0.05


def test_subharmonic_weight_examples():
    for N in (10, 64, 400):
        assert np.isclose(ob.subharmonic_weight((-1.0) ** np.arange(N)), 1.0)
    for N in (9, 31):
        # the alternating sequence of odd length has mean 1/N after subtraction
        assert np.isclose(ob.subharmonic_weight((-1.0) ** np.arange(N)), 1 - 1 / N**2)
    assert ob.subharmonic_weight(np.full(50, 0.3)) == 0.0
    assert ob.subharmonic_weight(np.cos(np.pi * np.arange(400) / 2)) < 1e-12
    spec = ob.power_spectrum(np.cos(np.pi * np.arange(400) / 2))
    assert np.isclose(spec.omegas[np.argmax(spec.amplitudes)], np.pi / 2)


def test_subharmonic_weight_with_t1():
    x = (-1.0) ** np.arange(40)
    assert np.isclose(ob.subharmonic_weight(x, t1=2.5), 1.0)


@given(st.lists(finite, min_size=4, max_size=80))
@settings(max_examples=80, deadline=None)
def test_subharmonic_weight_bounds_and_parseval(xs):
    f = ob.subharmonic_weight(xs)
    assert 0.0 <= f <= 1.0
    assert ob.power_spectrum(xs).amplitudes.sum() <= 1 + 1e-9


def test_revival_fidelity(b8):
    z2, z2p = hilbert.neel_states(b8)
    assert ob.revival_fidelity(z2, z2) == 1.0
    assert ob.revival_fidelity(z2, z2p) == 0.0


def test_echo_fidelity_even_periods(b8):
    z2, _ = hilbert.neel_states(b8)
    F = dynamics.run_drive(DriveSpec(8, np.pi, 1.37, n_periods=10), z2, ["fidelity"])["fidelity"]
    assert np.allclose(F[0::2], 1.0, atol=1e-10)


def test_ghz_fidelity_examples(b8):
    z2, z2p = hilbert.neel_states(b8)
    for phi in (0.0, 0.7, np.pi):
        assert np.isclose(ob.ghz_fidelity((z2 + np.exp(1j * phi) * z2p) / np.sqrt(2), b8), 1.0)
    assert np.isclose(ob.ghz_fidelity(z2, b8), 0.5)
    assert ob.ghz_fidelity(b8.basis_vector(0), b8) == 0.0


@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi), st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_ghz_phase_invariance(alpha, beta, seed):
    b = hilbert.enumerate_constrained(8)
    psi = random_state(np.random.default_rng(seed), b.dim)
    f = ob.ghz_fidelity(psi, b)
    assert np.isclose(ob.ghz_fidelity(np.exp(1j * alpha) * psi, b), f)
    z2p = hilbert.neel_configs(8)[1]
    rotated = psi.copy()
    rotated[b.index_of(z2p)] *= np.exp(1j * beta)
    assert np.isclose(ob.ghz_fidelity(rotated, b), f)
    assert 0 <= f <= 1 + 1e-12


def test_qfi_examples(b8):
    z2, z2p = hilbert.neel_states(b8)
    A = ops.build_imbalance(b8, normalized=False)
    assert np.isclose(ob.quantum_fisher_information((z2 + z2p) / np.sqrt(2), A), 64.0)
    assert abs(ob.quantum_fisher_information(z2, A)) < 1e-12
    assert ob.quantum_fisher_information(b8.basis_vector(0), basis=b8) == 0.0


@given(st.integers(0, 10_000), st.floats(-5, 5))
@settings(max_examples=30, deadline=None)
def test_qfi_shift_invariance(seed, c):
    b = hilbert.enumerate_constrained(8)
    psi = random_state(np.random.default_rng(seed), b.dim)
    A = ops.build_imbalance(b, normalized=False)
    q = ob.quantum_fisher_information(psi, A)
    assert q >= 0
    shifted = A + c * ops.diagonal_operator(np.ones(b.dim))
    assert np.isclose(ob.quantum_fisher_information(psi, shifted), q, atol=1e-9)


def test_time_averaged_entropy():
    t = np.linspace(0, 4, 9)
    assert np.isclose(ob.time_averaged_entropy(TrajectoryRecord(t, {"entropy": np.full(9, 0.4)}, "s")), 0.4)
    assert np.isclose(ob.time_averaged_entropy(TrajectoryRecord(t, {"entropy": 0.4 * t / 4}, "s")), 0.2)
    b = hilbert.enumerate_constrained(8)
    z2, _ = hilbert.neel_states(b)
    rec = dynamics.run_drive(DriveSpec(8, np.pi, 2.3, n_periods=10, ), z2, ["entropy"], every=2)
    assert ob.time_averaged_entropy(rec) < 1e-10


def brute_correlator(psi0, U, basis, n_T, site):
    L = basis.L
    occ = basis.occupations.astype(float)
    Un = np.eye(U.shape[0], dtype=complex)
    C = np.zeros((L, n_T), dtype=complex)
    corr = np.zeros((n_T, L), dtype=complex)
    for n in range(n_T):
        Um = Un.conj().T
        for j in range(L):
            ni = np.diag(occ[:, site])
            nj = np.diag(occ[:, (site + j) % L])
            corr[n, j] = psi0.conj() @ ni @ Un @ nj @ Um @ psi0
        Un = U @ Un
    for a in range(L):
        for w in range(n_T):
            q, om = 2 * np.pi * a / L, 2 * np.pi * w / n_T
            C[a, w] = sum(np.exp(1j * (q * j + om * n)) * corr[n, j]
                          for n in range(n_T) for j in range(L)) / (n_T * L)
    return C


def test_correlator_identity_drive(b8):
    z2, _ = hilbert.neel_states(b8)
    for n_T in (1, 4, 7):
        grid = ob.spatiotemporal_correlator(z2, np.eye(b8.dim), b8, n_T)
        assert np.isclose(grid.at(np.pi, 0.0), 0.5)


def test_correlator_matches_double_loop(rng):
    b = hilbert.enumerate_constrained(6)
    psi = random_state(rng, b.dim)
    U = dynamics.floquet_unitary(DriveSpec(6, 0.9 * np.pi, 1.1))
    grid = ob.spatiotemporal_correlator(psi, U, b, 5, site=2)
    assert np.allclose(grid.values, brute_correlator(psi, U, b, 5, 2), atol=1e-12)


def test_correlator_swap_toy(b8):
    # U exchanges Z2 and Z2': the staggered pattern flips every period, so weight sits at (pi, pi)
    z2, z2p = hilbert.neel_states(b8)
    i, j = b8.index_of(hilbert.neel_configs(8)[0]), b8.index_of(hilbert.neel_configs(8)[1])
    U = np.eye(b8.dim)
    U[[i, j]] = U[[j, i]]
    grid = ob.spatiotemporal_correlator(z2, U, b8, 8)
    assert np.isclose(grid.at(np.pi, np.pi), 0.5)
    assert abs(grid.at(np.pi, 0.0)) < 1e-12


def test_correlator_symmetry(b8):
    # real unequal-time correlations (Neel start, permutation drive) give C(-q,-w) = C(q,w)^*
    z2, _ = hilbert.neel_states(b8)
    i, j = b8.index_of(hilbert.neel_configs(8)[0]), b8.index_of(hilbert.neel_configs(8)[1])
    U = np.eye(b8.dim)
    U[[i, j]] = U[[j, i]]
    grid = ob.spatiotemporal_correlator(z2, U, b8, 6)
    L, n_T = 8, 6
    mirrored = grid.values[(-np.arange(L)) % L][:, (-np.arange(n_T)) % n_T]
    assert np.abs(grid.values - mirrored.conj()).max() < 1e-14
    buf = io.StringIO()
    grid.to_csv(buf)
    assert len(buf.getvalue().splitlines()) == L * n_T + 1
