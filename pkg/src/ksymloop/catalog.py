"""Reference data: the cyclic F_{1,1,1} example, Clifford and Veronese curves, and seeded random instances."""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from . import geometry as ge
from .dpw import Potential
from .loops import DEFAULT_SAMPLES, MatrixLoop, fit_samples, loop_mul, roots_of_unity, uniton
from .symmetry import FlagPoint, TwistedAutomorphism

# ---------------------------------------------------------------------------
# the cyclic example on F_{1,1,1}

CYCLIC_A = 0.5 * np.roll(np.eye(3), 1, axis=0)  # 1/2 at (1,0), (2,1), (0,2)
E13 = np.zeros((3, 3))
E13[0, 2] = 1.0


def f111_automorphism() -> TwistedAutomorphism:
    return TwistedAutomorphism(FlagPoint.coordinate([1, 1, 1]))


def f111_potential() -> Potential:
    """``lambda^{-1} A dz``."""
    return Potential(3, {(-1, 0): CYCLIC_A})


def _xi(rows_with_inverse: tuple[int, ...], pattern=((1, 0), (2, 1), (0, 2))) -> Potential:
    terms = {}
    for r, c in pattern:
        p = -1 if r in rows_with_inverse else 0
        M = np.zeros((3, 3))
        M[r, c] = 0.5
        terms[(p, 0)] = terms.get((p, 0), 0) + M
    return Potential(3, terms)


# displayed conjugated potentials; the lambda^{-1} sits in the listed rows
XI = {0: _xi((1,)), 1: _xi((2,)), 2: _xi((0,))}
XI_TILDE = _xi((0, 1))


def vacuum(z: complex, K: int | None = None) -> MatrixLoop:
    """``exp(z (1/lambda - 1) A - zbar (lambda - 1) A^*)``, sampled exactly."""
    z = complex(z)
    K = K or fit_samples(2 * (16 + int(8 * abs(z))) + 1, DEFAULT_SAMPLES)
    lam = roots_of_unity(K)
    X = (z * (1 / lam - 1))[:, None, None] * CYCLIC_A - (np.conj(z) * (lam - 1))[:, None, None] * CYCLIC_A.T
    return MatrixLoop.from_samples(np.array([expm(x) for x in X]))


def lift_exponential(z: complex) -> np.ndarray:
    """``exp(z A - zbar A^*)``."""
    z = complex(z)
    return expm(z * CYCLIC_A - np.conj(z) * CYCLIC_A.T)


def psi_closed_form(z: complex, K: int | None = None) -> MatrixLoop:
    """``exp(z xi_2 - zbar xi_2^*) exp(-z A + zbar A^*)`` sampled on the circle."""
    z = complex(z)
    K = K or fit_samples(2 * (16 + int(8 * abs(z))) + 1, DEFAULT_SAMPLES)
    right = expm(-z * CYCLIC_A + np.conj(z) * CYCLIC_A.T)
    out = []
    for lam in roots_of_unity(K):
        x = XI[2].matrix_at_lambda(lam)
        out.append(expm(z * x - np.conj(z) * x.conj().T) @ right)
    return MatrixLoop.from_samples(np.array(out))


def psi_field() -> ge.UnitaryField:
    """``Psi(-1, z)`` with exact jets."""
    x = XI[2].matrix_at_lambda(-1)
    return ge.UnitaryField.exp_product([(x, -x.conj().T), (-CYCLIC_A, CYCLIC_A.T)], "Psi(-1)")


def A_psi_displayed(z: complex) -> np.ndarray:
    """``exp(zA - zbar A^*) E13 exp(-zA + zbar A^*)``."""
    E = lift_exponential(z)
    return E @ E13 @ np.linalg.inv(E)


def clifford_lift(n: int = 3, scale: float = 1.0):
    """``z -> [F, F', .., F^(n-1)]`` for the Clifford frame, unitary for every ``z``."""
    frame = ge.AnalyticFrame.clifford(n, scale)

    def g(z):
        D = frame.derivatives(z, n - 1)
        return np.concatenate([d / scale**j for j, d in enumerate(D)], axis=1)

    return g


def f111_alphas() -> list[ge.Bundle]:
    """``g(0)^{-1} phi`` and ``g(0)^{-1}(phi + G1(phi))`` for the Clifford curve at ``z/2``."""
    frame = ge.AnalyticFrame.clifford(3, 0.5)
    g0i = clifford_lift(3, 0.5)(0).conj().T
    phi = ge.as_bundle(frame)
    return [phi.transformed(g0i), ge.span(phi, ge.gauss_bundle(phi)).transformed(g0i)]


# ---------------------------------------------------------------------------
# random instances


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary (QR of a complex Gaussian with phases fixed)."""
    Z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))


def random_projector(n: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    U = random_unitary(n, rng)
    return U[:, :rank] @ U[:, :rank].conj().T


def random_extended_loop(n: int, rng: np.random.Generator, unitons: int = 2) -> MatrixLoop:
    """Based polynomial unitary loop: a product of ``P + lambda (I - P)`` factors."""
    out = MatrixLoop.identity(n)
    for _ in range(unitons):
        out = loop_mul(out, uniton(random_projector(n, int(rng.integers(1, n)), rng)))
    return out


def random_nested(n: int, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Nested orthonormal bases ``alpha_0 <= .. <= alpha_{k-2}`` with random (weakly increasing) ranks."""
    ranks = np.sort(rng.integers(0, n + 1, size=k - 1))
    U = random_unitary(n, rng)
    return [U[:, :r] for r in ranks]


def random_k_symmetric(k: int, n: int, rng: np.random.Generator):
    """``(Psi, alphas)`` for a random k-symmetric extended loop."""
    return random_extended_loop(n, rng), random_nested(n, k, rng)


def random_polynomial_loop(
    n: int,
    rng: np.random.Generator,
    degree: int = 2,
    lo: int = -1,
    noise: float = 0.3,
    sigma_min: float = 0.1,
    K: int = 256,
    max_tries: int = 1000,
) -> MatrixLoop:
    """``I + noise * random`` Laurent polynomial with ``min sigma >= sigma_min`` on the circle (rejection sampled)."""
    for _ in range(max_tries):
        c = noise * (rng.normal(size=(degree - lo + 1, n, n)) + 1j * rng.normal(size=(degree - lo + 1, n, n))) / np.sqrt(2 * n)
        c[-lo] += np.eye(n)
        g = MatrixLoop(c, lo, K)
        if g.min_singular_value()[0] >= sigma_min:
            return g
    raise RuntimeError("could not sample a loop with the requested singular-value floor")


def random_block_unitary(T: TwistedAutomorphism, rng: np.random.Generator) -> np.ndarray:
    """Unitary commuting with every flag projector (an element of the isotropy group)."""
    out = np.zeros((T.n, T.n), dtype=np.complex128)
    for P in T.flag.projectors:
        w, V = np.linalg.eigh(P)
        B = V[:, w > 0.5]
        if B.shape[1] == 0:
            continue
        out += B @ random_unitary(B.shape[1], rng) @ B.conj().T
    return out


def osculating_bundles(frame: ge.AnalyticFrame, k: int) -> list[ge.Bundle]:
    """``span(F, .., F^(j))`` for ``j = 0 .. k-2`` (holomorphic and superhorizontal)."""
    seq = ge.gauss_sequence(frame, k - 2)
    return [ge.span(*seq[: j + 1]) for j in range(k - 1)]
