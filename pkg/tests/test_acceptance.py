"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Run directly with ``python tests/test_acceptance.py`` or as part of ``pytest``;
the collected lines are repeated in the terminal summary.
"""

import sys

import numpy as np
import pytest
from scipy.linalg import expm

from ksymloop import catalog as ca
from ksymloop import dpw
from ksymloop import geometry as ge
from ksymloop import hardy
from ksymloop import symmetry as sy
from ksymloop.loops import MatrixLoop, loop_eval, loop_mul, loop_star, roots_of_unity, uniton

RESULTS: list[str] = []

Z9 = [0.0, 0.5, -0.5, 0.5j, -0.5j, 0.7 + 0.7j, -0.6 + 0.4j, 0.3 - 0.8j, 1.0]
Z5 = [0.0, 0.5, 0.5j, -0.7 + 0.3j, 0.6 + 0.6j]


def _passes(check) -> bool:
    _, v, t, *op = check
    return v > t if op == [">"] else v < t


def _fmt(check) -> str:
    n, v, t, *op = check
    return f"{n} {v:.2e} ({'>' if op == ['>'] else '<'} {t:.0e})"


def record(number, title: str, checks: list[tuple]) -> bool:
    """Print one line for the criterion.

    ``checks`` are ``(name, value, tol)`` passing when ``value < tol``, or
    ``(name, value, bound, ">")`` passing when ``value > bound``.
    """
    ok = all(_passes(c) for c in checks)
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2} {title}: " + "; ".join(_fmt(c) for c in checks)
    RESULTS.append(line)
    print(line)
    return ok


def test_criterion_01_vacuum_reproduction():
    err = neg = 0.0
    for z in Z9:
        K = 192
        g = MatrixLoop.from_samples(np.array([expm(z * ca.CYCLIC_A / l) for l in roots_of_unity(K)]))
        r = hardy.iwasawa_factor(g)
        err = max(err, r.Phi.distance(ca.vacuum(z)))
        neg = max(neg, r.negative_mass)
    assert record(1, "vacuum reproduction", [("max coefficient error", err, 1e-7), ("negative mass of b", neg, 1e-8)])


def test_criterion_02_potential_matrices():
    T = ca.f111_automorphism()
    mb = dpw.bar_mu(ca.f111_potential(), T)
    checks = [("xi_2 from bar_mu", mb.distance(ca.XI[2]), 1e-12)]
    for j in range(3):
        xj = dpw.gamma_j_potential(mb, T, j)
        checks.append((f"xi_{j}", xj.distance(ca.XI[j]), 1e-12))
        checks.append((f"xi_{j}(1) - A", float(np.abs(xj.matrix_at_lambda(1) - ca.CYCLIC_A).max()), 1e-12))
    xt = dpw.reverse_bar(mb, uniton(T.flag.projectors[0]), 2)
    checks.append(("xi tilde", xt.distance(ca.XI_TILDE), 1e-12))
    assert record(2, "potential matrices", checks)


def test_criterion_03_filtration_from_potentials():
    T = ca.f111_automorphism()
    mu = ca.f111_potential()
    mb = dpw.bar_mu(mu, T)
    worst = [0.0, 0.0, 0.0]
    psi_err = 0.0
    for z in Z5:
        W = hardy.span_image(loop_mul(T.s, dpw.integrate_at(mu, z)), N=48)
        F = sy.filtration_from_W(W, 3)
        for j in range(3):
            gam = uniton(sum(T.flag.projectors[: j + 1]))
            Phi_j = dpw.extended_at(dpw.gamma_j_potential(mb, T, j), z).Phi
            ref = hardy.span_image(loop_mul(gam, Phi_j), N=16)
            worst[j] = max(worst[j], hardy.subspace_distance(F.V[j], ref))
        psi = ca.psi_closed_form(z)
        psi_err = max(psi_err, hardy.subspace_distance(F.V[2], hardy.span_image(psi, 16)))
    checks = [(f"d(V_{j}, gamma_{j} Phi_{j} H+)", worst[j], 1e-6) for j in range(3)]
    checks.append(("d(V_2, Psi H+) closed form", psi_err, 1e-6))
    assert record(3, "filtration from potentials", checks)


def _psi_loop_and_derivatives(z):
    """``Psi(., z)`` sampled exactly, with exact ``d/dz`` and ``d/dzbar``."""
    z = complex(z)
    K = 192
    E2 = expm(-z * ca.CYCLIC_A + np.conj(z) * ca.CYCLIC_A.T)
    P, Dz, Dzb = [], [], []
    for lam in roots_of_unity(K):
        x = ca.XI[2].matrix_at_lambda(lam)
        E1 = expm(z * x - np.conj(z) * x.conj().T)  # x is normal, so the two terms commute
        P.append(E1 @ E2)
        Dz.append(E1 @ x @ E2 - E1 @ E2 @ ca.CYCLIC_A)
        Dzb.append(-E1 @ x.conj().T @ E2 + E1 @ E2 @ ca.CYCLIC_A.T)
    return tuple(MatrixLoop.from_samples(np.array(a)) for a in (P, Dz, Dzb))


def _psi_A_z(displayed_factor: float):
    mb = dpw.bar_mu(ca.f111_potential(), ca.f111_automorphism())
    zs = Z5[1:]
    fd = dpw.verify_extended(lambda z: dpw.extended_at(mb, z).Phi, zs, h=1e-2)
    exact = dpw.verify_extended(
        lambda z: _psi_loop_and_derivatives(z)[0], zs, derivative=lambda z: _psi_loop_and_derivatives(z)[1:]
    )
    e_fd = max(float(np.abs(c.A_z - displayed_factor * ca.A_psi_displayed(z)).max()) for c, z in zip(fd, zs))
    e_ex = max(float(np.abs(c.A_z - displayed_factor * ca.A_psi_displayed(z)).max()) for c, z in zip(exact, zs))
    resid = max(c.residual for c in fd + exact)
    return e_fd, e_ex, resid


@pytest.mark.xfail(strict=True, reason="the displayed A_z formula is -2 times the value the Psi field produces; see the decisions ledger")
def test_criterion_04_A_psi_formula_as_displayed():
    e_fd, e_ex, resid = _psi_A_z(1.0)
    assert record(
        4,
        "A_z of Psi vs displayed formula",
        [("finite differences", e_fd, 1e-5), ("analytic oracle", e_ex, 1e-8), ("extended-solution residual", resid, 1e-6)],
    )


def test_criterion_04_corrected_A_psi_formula():
    # what the Psi field actually gives: -1/2 Ad(exp(zA - zbar A*)) E13
    e_fd, e_ex, resid = _psi_A_z(-0.5)
    jets = max(float(np.abs(ca.psi_field().A(z)[0] + 0.5 * ca.A_psi_displayed(z)).max()) for z in Z5)
    checks = [("finite differences", e_fd, 1e-5), ("analytic oracle", e_ex, 1e-8), ("jet oracle", jets, 1e-8), ("residual", resid, 1e-6)]
    assert record("4*", "A_z of Psi vs -1/2 times the displayed formula (supplementary)", checks)


def test_criterion_05_clifford_geometry():
    F3 = ge.AnalyticFrame.clifford(3)
    seq = ge.gauss_sequence(F3, 3)
    w = np.exp(2j * np.pi * np.arange(3) / 3)
    checks = []
    for j in (1, 2):
        ref = ge.as_bundle(F3.transformed(np.diag(w**j)))
        checks.append((f"G^({j}) vs [F^({j})]", ge.projector_distance(seq[j], ref), 1e-7))
    checks.append(("G^(3) vs phi", ge.projector_distance(seq[3], seq[0]), 1e-8))
    iso3 = ge.isotropy_order(F3, 4)
    checks.append(("|isotropy order (n=3) - 2|", abs(iso3.order - 2) + iso3.exceeded, 0.5))
    F5 = ge.AnalyticFrame.clifford(5)
    iso5 = ge.isotropy_order(F5, 6)
    checks.append(("|isotropy order (n=5) - 4|", abs(iso5.order - 4) + iso5.exceeded, 0.5))
    s5 = ge.gauss_sequence(F5, 2)
    checks.append(("(A_z)^2 of psi0+G1+G2", ge.nilconformal_check(ge.span(*s5)), 1e-6))
    assert record(5, "Clifford geometry", checks)


def test_criterion_06_diff_condition():
    checks = [("F111", max(ge.diff_condition_check(ca.psi_field(), ca.f111_alphas()).residuals), 1e-6)]
    V = ge.AnalyticFrame.veronese(4)
    for k in (2, 3, 4):
        psi, alphas = ge.alpha_builder_holo(V, k)
        checks.append((f"Veronese k={k}", max(ge.diff_condition_check(psi, alphas).residuals), 1e-6))
    # negative control: break the nesting with random subspaces of the right ranks
    rng = np.random.default_rng(6)
    worst = np.inf
    for trial in range(10):
        if trial % 2 == 0:
            psi, alphas = ca.psi_field(), list(ca.f111_alphas())
            n = 3
        else:
            psi, alphas = ge.alpha_builder_holo(V, 3)
            alphas = list(alphas)
            n = 4
        j = int(rng.integers(0, len(alphas)))
        rank = alphas[j].rank_at(0.1)
        alphas[j] = ge.Bundle.constant(ca.random_projector(n, rank, rng))
        res = ge.diff_condition_check(psi, alphas)
        worst = min(worst, max(res.residuals))
    checks.append(("min residual of 10 nesting violations", worst, 1e-2, ">"))
    assert record(6, "diff-condition", checks)


def test_criterion_07_bijection():
    rng = np.random.default_rng(7)
    rt = root = 0.0
    for _ in range(50):
        k = int(rng.integers(2, 5))
        n = int(rng.integers(3, 7))
        Psi, alphas = ca.random_k_symmetric(k, n, rng)
        Phi = sy.build_W(Psi, alphas, k)
        dec = sy.detwist(Phi, k)
        rt = max(rt, sy.build_W(dec.Psi, dec.alphas, k).distance(Phi), dec.Psi.distance(Psi))
        root = max(root, dec.diagnostics["root_defect"])
    assert record(7, "build_W / detwist bijection (50 instances)", [("round trip", rt, 1e-7), ("phi_k^k - I", root, 1e-9)])


def _f111_framing(z):
    """``Phi = s Phi^mu`` and a twisted ``Phi~ = s^{-1} Phi g`` with ``Phi(omega) = g s(omega) g^{-1}``."""
    T = ca.f111_automorphism()
    Phi = loop_mul(T.s, dpw.extended_at(ca.f111_potential(), z).Phi)
    g = sy.flag_lift(loop_eval(Phi, T.omega), T)
    return Phi, loop_mul(loop_star(T.s), Phi @ g)


def test_criterion_08_gamma_tau_theta():
    rng = np.random.default_rng(8)
    T = ca.f111_automorphism()
    rt = 0.0
    for _ in range(10):
        g = ca.random_extended_loop(3, rng)
        rt = max(rt, sy.gamma_tau_inv(sy.gamma_tau(g, T), T).distance(g))
    wv = gauge = 0.0
    for z in Z5:
        Phi, Pt = _f111_framing(z)
        gauge = max(gauge, sy.theta(Pt, T).distance(Phi))
        V = sy.filtration_from_W(hardy.span_image(Phi, 48), 3).V[2]
        wv = max(wv, hardy.subspace_distance(V, hardy.span_image(sy.gamma_tau_inv(Pt, T), 16)))
    _, Pt = _f111_framing(0.4 + 0.3j)
    base = sy.theta(Pt, T)
    for _ in range(20):
        u = ca.random_block_unitary(T, rng)
        gauge = max(gauge, sy.theta(Pt @ u, T).distance(base))
    assert record(
        8,
        "Gamma_tau / Theta coherence",
        [("gamma_tau round trip", rt, 1e-10), ("Theta recovery and gauge invariance", gauge, 1e-10), ("V_2 = Gamma^-1(Phi~) H+", wv, 1e-6)],
    )


def test_criterion_09_factorization_soundness():
    rng = np.random.default_rng(9)
    res = uni = stab = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 7))
        g = ca.random_polynomial_loop(n, rng)
        r = hardy.iwasawa_factor(g)
        r2 = hardy.iwasawa_factor(g, 2 * r.depth)
        res = max(res, r.residual)
        uni = max(uni, r.Phi.unitarity_defect())
        stab = max(stab, r.Phi.distance(r2.Phi))
    assert record(9, "factorization soundness (100 loops)", [("residual", res, 1e-8), ("unitarity", uni, 1e-10), ("N -> 2N", stab, 1e-8)])


def test_criterion_10_primitive_extraction():
    V = ge.AnalyticFrame.veronese(4)
    psi, alphas = ge.alpha_builder_holo(V, 4)
    seq = ge.gauss_sequence(V, 2)
    rank_dev = half = 0.0
    for z in Z5:
        P = psi(z)
        Phi = sy.build_W(MatrixLoop.from_terms({0: P, 1: np.eye(4) - P}), [a(z) for a in alphas], 4)
        _, prs = sy.primitive_extract(Phi, 4, 4)
        rank_dev = max(rank_dev, max(abs(sy.projector_rank(p) - 1) for p in prs))
        _, prs2 = sy.primitive_extract(Phi, 4, 2)
        ref = ge.span(seq[0], seq[2])(z)
        half = max(half, float(np.abs(prs2[1] - ref).max()))
    prim = sy.check_primitive(ca.lift_exponential, ca.f111_automorphism(), Z5)
    assert record(
        10,
        "primitive extraction",
        [("flag ranks (1,1,1,1) deviation", rank_dev, 0.5), ("phi_2 class vs psi + G2", half, 1e-7), ("F111 lift primitive", prim, 1e-5)],
    )


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
