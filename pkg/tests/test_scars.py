import io

import numpy as np
import pytest

from kickscar import dynamics, hilbert, operators as ops, scars
from kickscar.dynamics import DriveSpec
from kickscar.operators import DeformationParams

TAU_R = 4.786


@pytest.fixture(scope="module", params=[8, 12])
def sub(request):
    return scars.build_scar_subspace(hilbert.enumerate_constrained(request.param))


def test_subspace_structure(sub):
    L = sub.basis.L
    V = sub.vectors
    assert V.shape == (sub.basis.dim, L + 1)
    assert np.abs(V.conj().T @ V - np.eye(L + 1)).max() < 1e-10
    z2, z2p = hilbert.neel_states(sub.basis)
    assert np.allclose(V[:, 0], z2)
    assert np.isclose(sub.Sz[0, 0].real, L / 2) and np.isclose(sub.Sz[-1, -1].real, -L / 2)
    assert np.allclose(sub.Sz, np.diag(np.arange(L / 2, -L / 2 - 1, -1)), atol=1e-12)
    K = sub.projector()
    assert np.abs(K @ K - K).max() < 1e-10
    assert np.allclose(K @ z2, z2, atol=1e-10) and np.allclose(K @ z2p, z2p, atol=1e-10)
    for S in (sub.Sx, sub.Sy, sub.Sz):
        assert np.abs(S - S.conj().T).max() < 1e-12


def test_closure(sub):
    r = scars.closure_residuals(sub)
    assert r["sz_splus"] < 1e-8 and r["sz_sminus"] < 1e-8
    # the deformation makes the remaining commutator nearly exact; undeformed is far off
    undeformed = scars.closure_residuals(scars.build_scar_subspace(sub.basis, DeformationParams(0.0)))
    assert r["splus_sminus"] < 0.05 < undeformed["splus_sminus"]


def test_spectral_normalization(sub):
    L = sub.basis.L
    ev = np.linalg.eigvalsh(sub.Sx)
    assert np.abs(ev - np.arange(-L / 2, L / 2 + 1)).max() < 0.1


def test_literal_normalization():
    b = hilbert.enumerate_constrained(8)
    sub = scars.build_scar_subspace(b, normalization="literal", tau_tilde=4.86)
    assert np.isclose(sub.sx_scale, 1 / (2 * 4.86))
    with pytest.raises(ValueError):
        scars.build_scar_subspace(b, normalization="other")


def test_chain_terminates_early():
    b = hilbert.enumerate_constrained(8)
    with pytest.raises(scars.FSAError, match="FSA chain terminated early"):
        scars.fsa_vectors(b, 0 * ops.build_pxp(b))


def test_number_projection():
    for L in (8, 12, 16):
        sub = scars.build_scar_subspace(hilbert.enumerate_constrained(L))
        p = scars.project_number_operator(sub)
        assert p.off_diagonal < 1e-8
        pole = p.c0 + p.c2 * (L / 2) ** 2 / L + p.c4 * (L / 2) ** 4 / L**3
        assert abs(pole - L / 2) <= p.residual + 1e-12
        assert scars.project_number_operator(sub, include_m6=True).residual < p.residual
    res6 = [scars.project_number_operator(scars.build_scar_subspace(hilbert.enumerate_constrained(L)),
                                          include_m6=True).residual for L in (8, 12, 16)]
    assert res6[0] > res6[1] > res6[2]


def test_bloch_north_pole_and_echo():
    b = hilbert.enumerate_constrained(12)
    sub = scars.build_scar_subspace(b)
    z2, _ = hilbert.neel_states(b)
    pts = scars.bloch_trajectory(DriveSpec(12, np.pi, 0.45 * TAU_R, n_periods=2), z2, sub)
    assert np.allclose([pts[0].x, pts[0].y, pts[0].z], [0, 0, 1], atol=1e-6)
    assert np.linalg.norm([pts[2].x, pts[2].y, pts[2].z - 1]) < 1e-3
    micro = scars.bloch_trajectory(DriveSpec(12, np.pi, 0.45 * TAU_R, n_periods=2), z2, sub,
                                   sampling="micromotion", substeps=10)
    assert all(p.radius <= 1 + 1e-8 for p in micro)
    assert {p.parity for p in micro} == {0, 1}
    buf = io.StringIO()
    scars.write_bloch_csv(micro, buf)
    assert buf.getvalue().splitlines()[0] == "t,x,y,z,parity_of_period"


def test_quarter_period_drive_shrinks_radius():
    b = hilbert.enumerate_constrained(16)
    sub = scars.build_scar_subspace(b)
    z2, _ = hilbert.neel_states(b)
    pts = scars.bloch_trajectory(DriveSpec(16, 0.985 * np.pi, TAU_R / 4, n_periods=10), z2, sub)
    r = [p.radius for p in pts[::2]]
    assert all(a > c for a, c in zip(r, r[1:]))
