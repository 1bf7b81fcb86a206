import json

import numpy as np
import pytest
from scipy.linalg import expm

from ksymloop import catalog as ca
from ksymloop.errors import DimensionMismatch, FactorizationFailed, SingularLoop, WrongMultiplicity
from ksymloop.hardy import (
    blh_symbol,
    containment_defect,
    iwasawa_factor,
    raw_distance,
    shift_subspace,
    span_image,
    subspace_distance,
    subspace_from_vectors,
    wandering_basis,
)
from ksymloop.loops import MatrixLoop, VectorLoop, loop_mul, uniton


def test_span_image_of_identity_is_hardy_space():
    W = span_image(MatrixLoop.identity(2), N=6)
    assert W.rank == 2 * 7
    assert W.orthonormality_defect() < 1e-14
    assert W.is_shift_invariant()
    assert W.wandering_dimension() == 2


def test_span_image_of_uniton(rng):
    P = ca.random_projector(3, 1, rng)
    W = span_image(uniton(P), N=8)
    # alpha + lambda H_+: the wandering space is alpha plus lambda * alpha^perp
    vecs = wandering_basis(W)
    assert len(vecs) == 3
    Phi = blh_symbol(W)
    assert Phi.distance(uniton(P)) < 1e-12


def test_span_image_singular():
    g = MatrixLoop.from_terms({0: np.eye(2), 1: -np.eye(2)})
    with pytest.raises(SingularLoop) as e:
        span_image(g)
    assert abs(abs(e.value.lam) - 1) < 1e-12 and e.value.sigma_min < 1e-8


def test_wrong_multiplicity():
    e0 = VectorLoop.from_stacked(np.array([1, 0], dtype=complex), 2, 0)
    W = subspace_from_vectors([e0], 2, 4)
    with pytest.raises(WrongMultiplicity):
        wandering_basis(W)


def test_blh_symbol_is_unique_up_to_basing(rng):
    g = ca.random_extended_loop(3, rng)
    W = span_image(g, 12)
    a, b = blh_symbol(W), blh_symbol(span_image(g @ ca.random_unitary(3, rng), 12))
    assert a.distance(b) < 1e-8
    assert a.distance(g) < 1e-10


def test_distances():
    H = span_image(MatrixLoop.identity(2), 6)
    lamH = span_image(MatrixLoop.monomial(np.eye(2), 1), 6)
    assert subspace_distance(H, H) < 1e-14
    assert abs(subspace_distance(H, lamH) - 1) < 1e-12
    assert abs(subspace_distance(lamH, H) - 1) < 1e-12
    assert containment_defect(lamH, H) < 1e-14
    assert containment_defect(H, lamH) > 0.5
    assert subspace_distance(shift_subspace(H), lamH) < 1e-14
    with pytest.raises(DimensionMismatch):
        raw_distance(H, span_image(MatrixLoop.identity(3), 6))


def test_generator_independent_distance(rng):
    # the same subspace from two generators differing by a Lambda^+ factor
    g = ca.random_extended_loop(3, rng)
    B = 0.3 * rng.normal(size=(3, 3))
    bplus = MatrixLoop.from_samples(np.array([expm(l * B) for l in np.exp(2j * np.pi * np.arange(192) / 192)]))
    W1, W2 = span_image(g, 16), span_image(loop_mul(g, bplus), 16)
    assert subspace_distance(W1, W2) < 1e-8
    assert raw_distance(W1, W2) > subspace_distance(W1, W2)


def test_iwasawa_identity():
    r = iwasawa_factor(MatrixLoop.identity(3))
    assert r.Phi.distance(MatrixLoop.identity(3)) < 1e-14
    assert r.b.distance(MatrixLoop.identity(3)) < 1e-14
    assert r.residual < 1e-14


def test_iwasawa_plus_loop(rng):
    B = rng.normal(size=(3, 3)) * 0.4
    lam = np.exp(2j * np.pi * np.arange(192) / 192)
    g = MatrixLoop.from_samples(np.array([expm(l * B) for l in lam]))
    r = iwasawa_factor(g)
    assert r.Phi.distance(MatrixLoop.identity(3)) < 1e-10
    assert r.b.distance(g) < 1e-10


def test_iwasawa_vacuum_closed_form():
    z = 0.4 - 0.3j
    A = ca.CYCLIC_A
    lam = np.exp(2j * np.pi * np.arange(192) / 192)
    g = MatrixLoop.from_samples(np.array([expm(z * A / l) for l in lam]))
    r = iwasawa_factor(g)
    assert r.Phi.distance(ca.vacuum(z)) < 1e-10
    b_ref = MatrixLoop.from_samples(np.array([expm(z * A + np.conj(z) * (l - 1) * A.T) for l in lam]))
    assert r.b.distance(b_ref) < 1e-10
    assert r.negative_mass < 1e-12


def test_dense_and_toeplitz_paths_agree(rng):
    g = ca.random_polynomial_loop(2, rng, degree=1, lo=-1)
    fast = iwasawa_factor(g)
    dense = blh_symbol(span_image(g, fast.depth))
    assert fast.Phi.distance(dense) < 1e-8


def test_iwasawa_explicit_depth_too_small_fails():
    # a loop whose unitary factor needs many degrees, truncated far too early
    A = 3.0 * ca.CYCLIC_A
    lam = np.exp(2j * np.pi * np.arange(192) / 192)
    g = MatrixLoop.from_samples(np.array([expm(A / l) for l in lam]))
    with pytest.raises(FactorizationFailed):
        iwasawa_factor(g, N=1, tol=1e-12)


def test_factorization_json(rng):
    r = iwasawa_factor(ca.random_extended_loop(2, rng))
    d = json.loads(r.to_json())
    assert {"residual", "negative_mass", "depth"} <= set(d)
    assert MatrixLoop.from_dict(d["Phi"]).distance(r.Phi) == 0


def test_csv_rows():
    W = span_image(MatrixLoop.identity(2), 2)
    rows = W.to_csv_rows()
    assert len(rows) == W.basis.shape[0] and len(rows[0]) == 2 * W.rank
    back = np.array([[float(x) for x in r] for r in rows])
    np.testing.assert_array_equal(back[:, : W.rank] + 1j * back[:, W.rank :], W.basis)
