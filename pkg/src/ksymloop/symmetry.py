"""The k-symmetric structure of based unitary loops and their subspaces.

A based unitary loop ``Phi`` is k-symmetric when ``Phi(omega lambda) =
Phi(lambda) phi_k`` for a constant ``phi_k`` with ``phi_k**k = I``. Its
eigenspaces ``beta_j`` split ``Phi`` into a loop ``Psi`` in ``lambda**k`` and
a flag, and the flag manifolds ``F_{r_0..r_{k-1}}`` carry the twisted
automorphism ``tau`` built from the loop ``s(lambda) = sum lambda**i P_i``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NotKSymmetric,
    NotKSymmetricSubspace,
    NotNested,
    NotRootOfIdentity,
    NotTwisted,
    TwistRemovalFailed,
    GridTooCoarse,
)
from .hardy import TruncatedSubspace, containment_defect, orthonormalize
from .loops import (
    MatrixLoop,
    VectorLoop,
    loop_eval,
    loop_mul,
    loop_star,
    off_multiple_norm,
    power_substitute,
    root_substitute,
    rotate,
)

PROJECTOR_TOL = 1e-10
CONSTANCY_TOL = 1e-8
ROOT_TOL = 1e-9
TWIST_TOL = 1e-8


def omega(k: int) -> complex:
    return complex(np.exp(2j * np.pi / k))


def range_projector(B: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the column span of ``B``."""
    Q = orthonormalize(np.asarray(B, dtype=np.complex128))
    return Q @ Q.conj().T


def projector_basis(P: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the range of a Hermitian projector."""
    e, V = np.linalg.eigh((P + P.conj().T) / 2)
    return V[:, e > 0.5]


def projector_rank(P: np.ndarray) -> int:
    return int(round(np.trace(P).real))


# ---------------------------------------------------------------------------
# flags and the twisted automorphism


@dataclass(frozen=True)
class FlagType:
    ranks: tuple[int, ...]

    def __post_init__(self):
        if any(r < 0 for r in self.ranks) or len(self.ranks) < 2:
            raise ValueError(f"invalid flag ranks {self.ranks}")

    @property
    def k(self) -> int:
        return len(self.ranks)

    @property
    def n(self) -> int:
        return sum(self.ranks)


@dataclass(frozen=True, eq=False)
class FlagPoint:
    """Mutually orthogonal projectors ``P_0..P_{k-1}`` summing to the identity."""

    projectors: tuple[np.ndarray, ...]

    def __post_init__(self):
        Ps = tuple(np.asarray(P, dtype=np.complex128) for P in self.projectors)
        object.__setattr__(self, "projectors", Ps)
        n = Ps[0].shape[0]
        for i, P in enumerate(Ps):
            if np.abs(P @ P - P).max() > PROJECTOR_TOL or np.abs(P - P.conj().T).max() > PROJECTOR_TOL:
                raise ValueError(f"P_{i} is not an orthogonal projector")
        if np.abs(sum(Ps) - np.eye(n)).max() > PROJECTOR_TOL:
            raise ValueError("flag projectors do not sum to the identity")

    @classmethod
    def coordinate(cls, ranks) -> "FlagPoint":
        """Flag of consecutive coordinate subspaces with the given ranks."""
        n = sum(ranks)
        Ps, start = [], 0
        for r in ranks:
            P = np.zeros((n, n))
            P[start : start + r, start : start + r] = np.eye(r)
            Ps.append(P)
            start += r
        return cls(tuple(Ps))

    @classmethod
    def from_bases(cls, bases) -> "FlagPoint":
        return cls(tuple(range_projector(B) for B in bases))

    @property
    def k(self) -> int:
        return len(self.projectors)

    @property
    def n(self) -> int:
        return self.projectors[0].shape[0]

    @property
    def flag_type(self) -> FlagType:
        return FlagType(tuple(projector_rank(P) for P in self.projectors))

    def distance(self, other: "FlagPoint") -> float:
        return max(float(np.linalg.norm(P - Q, 2)) for P, Q in zip(self.projectors, other.projectors))

    def to_dict(self) -> dict:
        return {
            "ranks": list(self.flag_type.ranks),
            "projectors": [{"re": P.real.tolist(), "im": P.imag.tolist()} for P in self.projectors],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FlagPoint":
        return cls(tuple(np.asarray(p["re"]) + 1j * np.asarray(p["im"]) for p in d["projectors"]))


@dataclass(frozen=True, eq=False)
class TwistedAutomorphism:
    """The loop ``s`` of a flag point and the automorphism ``tau = Ad s(omega)^{-1}``."""

    flag: FlagPoint

    @property
    def k(self) -> int:
        return self.flag.k

    @property
    def n(self) -> int:
        return self.flag.n

    @property
    def omega(self) -> complex:
        return omega(self.k)

    @property
    def s(self) -> MatrixLoop:
        return MatrixLoop.from_terms({i: P for i, P in enumerate(self.flag.projectors)})

    def s_at(self, lam) -> np.ndarray:
        return sum(complex(lam) ** i * P for i, P in enumerate(self.flag.projectors))

    def tau(self, X: np.ndarray) -> np.ndarray:
        S = self.s_at(self.omega)
        return S.conj().T @ X @ S

    def component(self, X: np.ndarray, i: int) -> np.ndarray:
        """Part of ``X`` in the ``omega**i`` eigenspace of ``tau``: blocks ``Hom(A_j, A_{j-i})``."""
        Ps = self.flag.projectors
        k = self.k
        return sum(Ps[(j - i) % k] @ X @ Ps[j] for j in range(k))

    def off_class_norm(self, X: np.ndarray, classes) -> float:
        """Frobenius norm of ``X`` outside the given eigenspace classes."""
        R = np.array(X, dtype=np.complex128)
        for i in classes:
            R = R - self.component(X, i)
        return float(np.linalg.norm(R))

    def is_fixed(self, X: np.ndarray, tol: float = 1e-10) -> bool:
        return self.off_class_norm(X, [0]) < tol

    def twist_residual(self, gamma: MatrixLoop) -> float:
        """Largest coefficient norm of ``tau(gamma(lambda)) - gamma(omega lambda)``."""
        S = self.s_at(self.omega)
        lhs = MatrixLoop(S.conj().T @ gamma.coeffs @ S, gamma.dmin, gamma.K)
        d = (lhs - rotate(gamma, self.omega)).coeffs
        return float(np.sqrt((np.abs(d) ** 2).sum(axis=(1, 2))).max())


def cartan_embed(g: np.ndarray, T: TwistedAutomorphism) -> np.ndarray:
    """The point ``g s(omega) g^*`` of the k-th roots of the identity."""
    g = np.asarray(g, dtype=np.complex128)
    return g @ T.s_at(T.omega) @ g.conj().T


def flag_lift(phi: np.ndarray, T: TwistedAutomorphism) -> np.ndarray:
    """A unitary ``g`` with ``phi = g s(omega) g^*``, built from eigenbases of ``phi``."""
    pis = spectral_projectors(phi, T.k)
    n = T.n
    g = np.zeros((n, n), dtype=np.complex128)
    for pi, P in zip(pis, T.flag.projectors):
        U, V = projector_basis(pi), projector_basis(P)
        if U.shape[1] != V.shape[1]:
            raise NotKSymmetric(f"eigenspace ranks {U.shape[1]} and flag ranks {V.shape[1]} differ")
        g += U @ V.conj().T
    return g


# ---------------------------------------------------------------------------
# k-symmetry of loops


def check_k_symmetric(Phi: MatrixLoop, k: int, tol: float = CONSTANCY_TOL) -> np.ndarray:
    """Return the constant ``phi_k = Phi(lambda)^* Phi(omega lambda)``."""
    R = rotate(Phi, omega(k))
    K = max(Phi.K, R.K)
    C = np.conj(np.swapaxes(Phi.samples_at(K), 1, 2)) @ R.samples_at(K)
    mean = C.mean(axis=0)
    dev = float(np.abs(C - mean).max())
    if dev > tol:
        raise NotKSymmetric(f"Phi^* Phi(omega .) deviates from a constant by {dev:.3e} (k={k})")
    root = float(np.abs(np.linalg.matrix_power(mean, k) - np.eye(len(mean))).max())
    if root > ROOT_TOL:
        raise NotKSymmetric(f"phi_k^k differs from I by {root:.3e}")
    return mean


def spectral_projectors(phi: np.ndarray, k: int, tol: float = ROOT_TOL) -> list[np.ndarray]:
    """Projectors onto ``ker(phi - omega**j I)`` by averaging powers of ``phi``."""
    phi = np.asarray(phi, dtype=np.complex128)
    n = len(phi)
    dev = float(np.abs(np.linalg.matrix_power(phi, k) - np.eye(n)).max())
    if dev > tol:
        raise NotRootOfIdentity(f"phi^k differs from I by {dev:.3e} (k={k})")
    w = omega(k)
    powers = [np.eye(n, dtype=np.complex128)]
    for _ in range(k - 1):
        powers.append(powers[-1] @ phi)
    return [sum(w ** (-l * j) * powers[l] for l in range(k)) / k for j in range(k)]


def spectral_projectors_product(phi: np.ndarray, k: int) -> list[np.ndarray]:
    """Same projectors from ``prod_{i != j} (phi - omega^i) / (omega^j - omega^i)``."""
    phi = np.asarray(phi, dtype=np.complex128)
    n = len(phi)
    w = omega(k)
    out = []
    for j in range(k):
        P = np.eye(n, dtype=np.complex128)
        for i in range(k):
            if i != j:
                P = P @ (phi - w**i * np.eye(n)) / (w**j - w**i)
        out.append(P)
    return out


@dataclass(frozen=True, eq=False)
class KSymmetricDecomposition:
    k: int
    phi_k: np.ndarray
    projectors: list[np.ndarray]
    alphas: list[np.ndarray]
    Phi_k: MatrixLoop
    Psi: MatrixLoop
    diagnostics: dict = field(default_factory=dict)

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(projector_rank(P) for P in self.projectors)

    @property
    def flag(self) -> FlagPoint:
        return FlagPoint(tuple(self.projectors))

    def alpha_projectors(self) -> list[np.ndarray]:
        return [range_projector(a) for a in self.alphas]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "ranks": list(self.ranks),
            "phi_k": {"re": self.phi_k.real.tolist(), "im": self.phi_k.imag.tolist()},
            "alpha_ranks": [int(a.shape[1]) for a in self.alphas],
            "Psi": self.Psi.to_dict(),
            "diagnostics": self.diagnostics,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def detwist(Phi: MatrixLoop, k: int, tol: float = ROOT_TOL) -> KSymmetricDecomposition:
    """Split a k-symmetric based loop into ``Psi(lambda**k)`` and the eigenspace flag."""
    phi = check_k_symmetric(Phi, k)
    pis = spectral_projectors(phi, k)
    twist = MatrixLoop.from_terms({-j: P for j, P in enumerate(pis)})
    Phi_k = loop_mul(Phi, twist)
    bad = off_multiple_norm(Phi_k, k)
    if bad > tol:
        raise TwistRemovalFailed(f"Phi_k has mass {bad:.3e} at degrees not divisible by {k}")
    Psi = root_substitute(Phi_k, k, tol=tol)
    alphas = []
    acc = np.zeros_like(pis[0])
    for P in pis[:-1]:
        acc = acc + P
        alphas.append(projector_basis(acc))
    diag = {
        "unitarity_defect": Psi.unitarity_defect(),
        "based_defect": Psi.based_defect(),
        "off_multiple_mass": bad,
        "root_defect": float(np.abs(np.linalg.matrix_power(phi, k) - np.eye(len(phi))).max()),
    }
    return KSymmetricDecomposition(k, phi, pis, alphas, Phi_k, Psi, diag)


def build_W(Psi: MatrixLoop, alphas, k: int, tol: float = 1e-8) -> MatrixLoop:
    """``Phi(lambda) = Psi(lambda**k) sum_j pi_{beta_j} lambda**j`` with ``beta_j = alpha_j - alpha_{j-1}``."""
    n = Psi.n
    if len(alphas) != k - 1:
        raise ValueError(f"need k-1 = {k - 1} subspaces, got {len(alphas)}")
    Ps = [np.zeros((n, n), dtype=np.complex128)]
    for a in alphas:
        a = np.asarray(a, dtype=np.complex128)
        Ps.append(a if a.shape == (n, n) and np.allclose(a @ a, a, atol=1e-10) else range_projector(a))
    Ps.append(np.eye(n, dtype=np.complex128))
    for j in range(1, len(Ps)):
        leak = float(np.linalg.norm((np.eye(n) - Ps[j]) @ Ps[j - 1], 2))
        if leak > tol:
            raise NotNested(f"alpha_{j - 2} is not contained in alpha_{j - 1} (leak {leak:.3e})")
    betas = {j: Ps[j + 1] - Ps[j] for j in range(k)}
    return loop_mul(power_substitute(Psi, k), MatrixLoop.from_terms(betas))


# ---------------------------------------------------------------------------
# subspaces


def eigenspace_project(f: VectorLoop, j: int, k: int) -> VectorLoop:
    """``(1/k) sum_l omega^{-lj} f(omega^l lambda)``: the part of ``f`` in degrees ``= j mod k``."""
    w = omega(k)
    acc = None
    for l in range(k):
        term = rotate(f, w**l) * (w ** (-l * j) / k)
        acc = term if acc is None else acc + term
    return acc


def _degree_mask(W: TruncatedSubspace, j: int, k: int) -> np.ndarray:
    degs = np.repeat(np.arange(W.dmin, W.dmax + 1), W.n)
    return (degs - j) % k == 0


def rotation_defect(W: TruncatedSubspace, k: int) -> float:
    """How far the rotate ``f(omega .)`` of the basis leaves the span."""
    degs = np.repeat(np.arange(W.dmin, W.dmax + 1), W.n)
    R = W.basis * (omega(k) ** degs)[:, None]
    Q = W.basis
    return float(np.linalg.norm(R - Q @ (Q.conj().T @ R), 2))


@dataclass(frozen=True, eq=False)
class Filtration:
    k: int
    V: list[TruncatedSubspace]

    def nesting_defects(self) -> list[float]:
        """Containment defects of ``V_0 <= V_1 <= ... <= V_{k-1}`` and of ``S V_{k-1} <= V_0``."""
        out = [containment_defect(self.V[j], self.V[j + 1]) for j in range(self.k - 1)]
        shifted = loop_mul(MatrixLoop.monomial(np.eye(self.V[0].n), 1), self.V[-1].raw_symbol)
        out.append(loop_mul(loop_star(self.V[0].raw_symbol), shifted).negative_mass())
        return out


def filtration_from_W(W: TruncatedSubspace, k: int, tol: float = 1e-8) -> Filtration:
    """The subspaces ``V_j = {f : lambda^j f(lambda^k) in W}`` of a k-symmetric ``W``."""
    d = rotation_defect(W, k)
    if d > tol:
        raise NotKSymmetricSubspace(f"rotation by omega_{k} leaves W by {d:.3e}")
    n = W.n
    Vs = []
    for j in range(k):
        mask = _degree_mask(W, j, k)
        comp = orthonormalize(np.where(mask[:, None], W.basis, 0))
        # keep the degrees j + k*m and relabel them as m
        blocks = comp.reshape(-1, n, comp.shape[1])
        first = (j - W.dmin) % k
        kept = blocks[first::k]
        dmin = (W.dmin + first - j) // k
        basis = orthonormalize(kept.reshape(-1, comp.shape[1]))
        Vs.append(TruncatedSubspace(basis, n, dmin, W.depth // k, f"V_{j}"))
    return Filtration(k, Vs)


# ---------------------------------------------------------------------------
# twisted loops


def gamma_tau(gamma: MatrixLoop, T: TwistedAutomorphism) -> MatrixLoop:
    """``s(lambda)^{-1} gamma(lambda**k) s(lambda)``."""
    s = T.s
    return loop_mul(loop_mul(loop_star(s), power_substitute(gamma, T.k)), s)


def gamma_tau_inv(gamma: MatrixLoop, T: TwistedAutomorphism, tol: float = TWIST_TOL) -> MatrixLoop:
    """Inverse of :func:`gamma_tau` on twisted loops, by conjugation and decimation."""
    r = T.twist_residual(gamma)
    if r > tol:
        raise NotTwisted(f"twist residual {r:.3e} exceeds {tol:.1e}")
    s = T.s
    conj = loop_mul(loop_mul(s, gamma), loop_star(s))
    return root_substitute(conj, T.k, tol=max(tol, 1e-10))


def theta(Phi_t: MatrixLoop, T: TwistedAutomorphism, tol: float = TWIST_TOL) -> MatrixLoop:
    """The based loop ``s Phi_t Phi_t(1)^{-1}`` of a twisted loop."""
    r = T.twist_residual(Phi_t)
    if r > tol:
        raise NotTwisted(f"twist residual {r:.3e} exceeds {tol:.1e}")
    inv1 = np.linalg.inv(loop_eval(Phi_t, 1.0))
    return loop_mul(T.s, Phi_t @ inv1)


def primitive_extract(Phi: MatrixLoop, k: int, l: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Evaluate at ``omega_l`` and split into the flag of ``l`` spectral projectors."""
    if l < 1 or k % l:
        raise ValueError(f"l = {l} does not divide k = {k}")
    phi_l = loop_eval(Phi, omega(l))
    return phi_l, spectral_projectors(phi_l, l)


def _richardson_dz(f, z, h):
    def d(h):
        fx = (f(z + h) - f(z - h)) / (2 * h)
        fy = (f(z + 1j * h) - f(z - 1j * h)) / (2 * h)
        return 0.5 * (fx - 1j * fy)

    a, b = d(h), d(h / 2)
    return (4 * b - a) / 3, float(np.abs(b - a).max())


def check_primitive(
    lift,
    T: TwistedAutomorphism,
    zs,
    h: float = 1e-3,
    derivative=None,
) -> float:
    """Largest norm of the part of ``lift^{-1} d lift/dz`` outside ``g^0 + g^{-1}``.

    ``lift`` maps ``z`` to a unitary matrix; ``derivative`` optionally gives
    ``d lift/dz`` exactly, otherwise Richardson-extrapolated central
    differences with step ``h`` are used.
    """
    worst = 0.0
    for z in zs:
        g = lift(z)
        if derivative is not None:
            dg = derivative(z)
        else:
            dg, est = _richardson_dz(lift, z, h)
            if est > 1e-3 * max(1.0, float(np.abs(dg).max())):
                raise GridTooCoarse(f"finite-difference estimate {est:.2e} at z={z}")
        X = np.linalg.solve(g, dg)
        worst = max(worst, T.off_class_norm(X, [0, -1]))
    return worst
