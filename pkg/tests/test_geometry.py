import math

import numpy as np
import pytest
from scipy.linalg import expm

from ksymloop import catalog as ca
from ksymloop import geometry as ge
from ksymloop.dpw import ZGrid
from ksymloop.errors import NotFull, NotNilconformal, ParameterOutOfRange, RankUnstable

ZS = ge.SAMPLE_POINTS


def _fd(f, z, h=1e-4):
    fx = (f(z + h) - f(z - h)) / (2 * h)
    fy = (f(z + 1j * h) - f(z - 1j * h)) / (2 * h)
    return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)


def test_jet_exp_matches_expm(rng):
    D = np.diag(rng.normal(size=3) + 1j * rng.normal(size=3))
    J = ge.Jet.exp(D, -D.conj(), 0.3 - 0.1j, 4)
    np.testing.assert_allclose(J.value, expm(0.3 * D - 0.1j * D - np.conj(0.3 - 0.1j) * D.conj()), atol=1e-14)
    f = lambda z: expm(z * D - np.conj(z) * D.conj())
    dz, dzb = _fd(f, 0.3 - 0.1j)
    np.testing.assert_allclose(J.dz().value, dz, atol=1e-7)
    np.testing.assert_allclose(J.dzbar().value, dzb, atol=1e-7)
    with pytest.raises(ValueError):
        ge.Jet.exp(np.array([[0, 1], [0, 0]]), np.array([[0, 0], [1, 0]]), 0, 2)


def test_jet_algebra_product_rule_and_inverse():
    F = ge.AnalyticFrame.clifford(3)
    z0 = 0.2 + 0.3j
    a = F.jet(z0, 3)
    P = a @ a.H
    lhs = P.dz().value
    rhs = a.dz().value @ a.H.value + a.value @ a.H.dz().value
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)
    M = ge.Jet.constant(np.eye(3), 3) + 0.3 * P
    prod = M @ M.inv()
    np.testing.assert_allclose(prod.c[0, 0], np.eye(3), atol=1e-14)
    assert np.abs(prod.c[1:]).max() < 1e-13 and np.abs(prod.c[0, 1:]).max() < 1e-13
    with pytest.raises(ValueError):
        ge.Jet.constant(np.eye(2), 0).dz()


def test_projector_jet_matches_finite_differences():
    B = ge.as_bundle(ge.AnalyticFrame.veronese(4))
    z0 = 0.4 - 0.2j
    dz, dzb = _fd(B, z0)
    J = B.jet(z0, 1)
    np.testing.assert_allclose(J.dz().value, dz, atol=1e-7)
    np.testing.assert_allclose(J.dzbar().value, dzb, atol=1e-7)


def test_frame_derivatives_clifford():
    F = ge.AnalyticFrame.clifford(3)
    w = np.exp(2j * np.pi * np.arange(3) / 3)
    z = 0.5 - 0.3j
    D = F.derivatives(z, 2)
    for j, d in enumerate(D):
        np.testing.assert_allclose(d[:, 0], w**j * F(z)[:, 0], atol=1e-13)


def test_clifford_lift_is_unitary_with_constant_A():
    g = ca.clifford_lift(3)
    gh = ca.clifford_lift(3, 0.5)
    for z in ZS:
        np.testing.assert_allclose(g(z).conj().T @ g(z), np.eye(3), atol=1e-13)
        dz, _ = _fd(gh, z)
        np.testing.assert_allclose(np.linalg.solve(gh(z), dz), ca.CYCLIC_A, atol=1e-7)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_clifford_gauss_sequence(n):
    F = ge.AnalyticFrame.clifford(n)
    seq = ge.gauss_sequence(F, n)
    w = np.exp(2j * np.pi * np.arange(n) / n)
    for j in range(1, n):
        ref = ge.as_bundle(F.transformed(np.diag(w**j)))
        assert ge.projector_distance(seq[j], ref) < 1e-7
    assert ge.projector_distance(seq[n], seq[0]) < 1e-8
    assert ge.isotropy_order(F, n + 1).order == n - 1
    assert ge.Diagram(tuple(seq[:n])).orthogonality_residual() < 1e-9


def test_veronese_is_full_and_totally_isotropic():
    V = ge.AnalyticFrame.veronese(4)
    ge.check_full(V)
    seq = ge.gauss_sequence(V, 3)
    assert all(s.rank_at(0.3) == 1 for s in seq)
    assert ge.Diagram(tuple(seq)).orthogonality_residual() < 1e-9
    iso = ge.isotropy_order(V, 4)
    assert iso.exceeded and int(iso) == 4
    assert ge.nilconformal_check(V) < 1e-12


def test_nilconformal_negative_control():
    # A_z = E20 + eps E12 at z = 0 gives (A_z)^2 = eps E10
    eps = 0.37
    X = np.zeros((3, 3))
    X[2, 0], X[1, 2] = 1.0, eps
    P0 = np.diag([1.0, 0.0, 0.0]) + 0j

    def jet(z0, r):
        # first-order projector jet at 0 with (2 P0 - I) dP/dz = X
        c = np.zeros((r + 1, r + 1, 3, 3), dtype=complex)
        c[0, 0] = P0
        if r >= 1:
            S = 2 * P0 - np.eye(3)
            c[1, 0] = S @ X
            c[0, 1] = c[1, 0].conj().T
        return ge.Jet(c)

    B = ge.Bundle(3, jet, "test")
    A = ge.A_z_jet(B, 0.0, 0).value
    np.testing.assert_allclose(A, X, atol=1e-15)
    assert abs(ge.nilconformal_check(B, [0.0]) - eps) < 1e-14


def test_sff_singular_values_frame_independent(rng):
    F = ge.AnalyticFrame.clifford(4)
    B = ge.as_bundle(F)
    G = ge.gauss_bundle(B)
    z = 0.25 + 0.1j
    s1 = np.linalg.svd(ge.second_fundamental_form(B, G, z), compute_uv=False)
    U = ca.random_unitary(4, rng)
    s2 = np.linalg.svd(ge.second_fundamental_form(B.transformed(U), G.transformed(U), z), compute_uv=False)
    np.testing.assert_allclose(s1, s2, atol=1e-12)
    assert s1[0] > 0.1


def test_nilprop_split_holomorphic():
    V = ge.AnalyticFrame.veronese(3)
    psi = ge.span(*ge.gauss_sequence(V, 1))
    psi0, psi1 = ge.nilprop_split(psi)
    z = 0.3 + 0.2j
    assert psi0.rank_at(z) + psi1.rank_at(z) == 2
    assert np.abs(psi0(z) @ psi1(z)).max() < 1e-12


def test_nilprop_split_clifford():
    F = ge.AnalyticFrame.clifford(6)
    seq = ge.gauss_sequence(F, 5)
    # d/dz maps G0 into G1 (inside the sum) and G1 out to G2
    t0 = ge.span(seq[0], seq[1])
    psi0, psi1 = ge.nilprop_split(t0, closing=seq[5])
    assert ge.projector_distance(psi0, seq[0]) < 1e-8
    assert ge.projector_distance(psi1, seq[1]) < 1e-8
    with pytest.raises(NotNilconformal):
        ge.nilprop_split(t0, closing=seq[0])


def test_alpha_builders():
    d6 = ge.Diagram.gauss(ge.AnalyticFrame.clifford(6), 5)
    psi, alphas = ge.alpha_builder_gen(d6, 2, 3)
    assert ge.diff_condition_check(psi, alphas).passed
    d4 = ge.Diagram.gauss(ge.AnalyticFrame.clifford(4), 3)
    psi, alphas = ge.alpha_builder_gen(d4, 1, 2)
    assert ge.diff_condition_check(psi, alphas).passed
    with pytest.raises(ParameterOutOfRange):
        ge.alpha_builder_gen(d4, 2, 2)
    with pytest.raises(ParameterOutOfRange):
        ge.alpha_builder_gen(d6, 2, 4)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_veronese_alphas_pass(k):
    psi, alphas = ge.alpha_builder_holo(ge.AnalyticFrame.veronese(4), k)
    r = ge.diff_condition_check(psi, alphas)
    assert r.passed, r.residuals


@pytest.mark.parametrize("k", [2, 3, 4])
def test_osculating_flags_with_identity(k):
    V = ge.AnalyticFrame.veronese(4)
    I = ge.Bundle.constant(np.eye(4))
    assert ge.diff_condition_check(I, ca.osculating_bundles(V, k)).passed


def test_alpha_builder_holo_errors():
    flat = ge.AnalyticFrame.polynomial([[[1], [0], [0]], [[0], [1], [0]]])
    with pytest.raises(NotFull):
        ge.alpha_builder_holo(flat, 2)
    with pytest.raises(ParameterOutOfRange):
        ge.alpha_builder_holo(ge.AnalyticFrame.veronese(3), 4)
    with pytest.raises(ValueError):
        ge.alpha_builder_holo(ge.AnalyticFrame.clifford(3), 2)


def test_diff_condition_negative_control(rng):
    psi, alphas = ge.alpha_builder_holo(ge.AnalyticFrame.veronese(4), 3)
    bad = [alphas[0], ge.Bundle.constant(ca.random_projector(4, 2, rng))]
    assert ge.diff_condition_check(psi, bad).r_i > 1e-2


def test_unitary_field_A_matches_fd():
    U = ca.psi_field()
    z = 0.3 + 0.2j
    Az, Azb = U.A(z)
    dz, dzb = _fd(U, z)
    Ui = np.linalg.inv(U(z))
    np.testing.assert_allclose(Az, 0.5 * Ui @ dz, atol=1e-7)
    np.testing.assert_allclose(Azb, -Az.conj().T, atol=1e-12)
    sampled = ge.UnitaryField.from_callable(U, 3)
    np.testing.assert_allclose(sampled.A(z)[0], Az, atol=1e-8)


def test_bundle_from_callable_first_order_only():
    B = ge.as_bundle(ge.AnalyticFrame.veronese(3))
    S = ge.Bundle.from_callable(B, 3)
    np.testing.assert_allclose(S.jet(0.2, 1).dz().value, B.jet(0.2, 1).dz().value, atol=1e-8)
    with pytest.raises(ValueError):
        S.jet(0.2, 2)


def test_projector_field_fills_isolated_singularity():
    # (1, z^2): the Gauss bundle loses rank at z = 0 only
    frame = ge.AnalyticFrame.polynomial([[[1], [0]], [[0], [0]], [[0], [1]]])
    G = ge.gauss_bundle(frame)
    grid = ZGrid(-1, 1, -1, 1, 5, 5)
    pf = G.on_grid(grid)
    assert pf.rank == 1 and pf.singular == [0j]
    assert pf.projector_defect() < 1e-12


def test_projector_field_rank_unstable():
    P = np.diag([1.0, 0.0])
    B = ge.Bundle(2, lambda z0, r: ge.Jet.constant(P if z0.real > 0 else 0 * P, r))
    with pytest.raises(RankUnstable):
        B.on_grid(ZGrid(-1, 1, -1, 1, 5, 5))


def test_diagram_to_dict():
    D = ge.Diagram.gauss(ge.AnalyticFrame.clifford(3), 2)
    d = D.to_dict()
    assert np.array(d["arrows"]).shape == (3, 3)
    assert D.closing_arrow()
    assert math.isclose(sum(D.arrows()[i, (i + 1) % 3] for i in range(3)), 3)
