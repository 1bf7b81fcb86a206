"""Harmonic maps into Grassmannians as projector fields.

Bundles are evaluated as Taylor jets in ``(z - z0, conj(z - z0))`` so that
second fundamental forms, Gauss bundles and the conditions on nested
subbundles can be checked with exact derivatives whenever the underlying
frame is analytic (Clifford, Veronese, exponential lifts). Fields given only
by values are differentiated with Richardson-extrapolated central
differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from .dpw import ZGrid
from .errors import (
    GridTooCoarse,
    NotFull,
    NotNilconformal,
    ParameterOutOfRange,
    RankUnstable,
)

RANK_TOL = 1e-8
ARROW_TOL = 1e-7
PASS_TOL = 1e-6
DEFAULT_ORDER = 8
SAMPLE_POINTS = (0.0, 0.3 + 0.2j, -0.45 + 0.6j, 0.8 - 0.35j, -0.2 - 0.7j)


# ---------------------------------------------------------------------------
# jets


class Jet:
    """Truncated Taylor jet ``sum c[a, b] dz**a dzbar**b`` with ``a + b <= order``."""

    __array_ufunc__ = None

    def __init__(self, c: np.ndarray):
        c = np.array(c, dtype=np.complex128)
        r = c.shape[0] - 1
        a, b = np.indices((r + 1, r + 1))
        c[a + b > r] = 0
        self.c = c

    @property
    def order(self) -> int:
        return self.c.shape[0] - 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.c.shape[2:]

    @property
    def value(self) -> np.ndarray:
        return self.c[0, 0]

    @classmethod
    def constant(cls, M, order: int) -> "Jet":
        M = np.asarray(M, dtype=np.complex128)
        c = np.zeros((order + 1, order + 1) + M.shape, dtype=np.complex128)
        c[0, 0] = M
        return cls(c)

    @classmethod
    def exp(cls, X, Y, z0: complex, order: int) -> "Jet":
        """Jet of ``exp(z X + zbar Y)`` for commuting ``X``, ``Y``."""
        X, Y = np.asarray(X, dtype=np.complex128), np.asarray(Y, dtype=np.complex128)
        if np.abs(X @ Y - Y @ X).max() > 1e-12 * max(1.0, np.abs(X).max() * np.abs(Y).max()):
            raise ValueError("exponential jets need commuting generators")
        n = len(X)
        E0 = expm(z0 * X + np.conj(z0) * Y)
        Xp = [np.eye(n, dtype=np.complex128)]
        Yp = [np.eye(n, dtype=np.complex128)]
        for m in range(order):
            Xp.append(Xp[-1] @ X / (m + 1))
            Yp.append(Yp[-1] @ Y / (m + 1))
        c = np.zeros((order + 1, order + 1, n, n), dtype=np.complex128)
        for a in range(order + 1):
            for b in range(order + 1 - a):
                c[a, b] = E0 @ Xp[a] @ Yp[b]
        return cls(c)

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError(f"jet of order {self.order} cannot supply order {order}")
        return Jet(self.c[: order + 1, : order + 1])

    def _common(self, other: "Jet") -> tuple["Jet", "Jet"]:
        r = min(self.order, other.order)
        return self.truncate(r), other.truncate(r)

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = self._common(other)
            return Jet(a.c + b.c)
        out = self.c.copy()
        out[0, 0] = out[0, 0] + other
        return Jet(out)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, s):
        return Jet(self.c * s)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if not isinstance(other, Jet):
            return Jet(np.einsum("abij,jk->abik", self.c, np.asarray(other, dtype=np.complex128)))
        a, b = self._common(other)
        r = a.order
        out = np.zeros((r + 1, r + 1, a.shape[0], b.shape[1]), dtype=np.complex128)
        for i in range(r + 1):
            for j in range(r + 1 - i):
                if not np.any(a.c[i, j]):
                    continue
                out[i:, j:] += np.einsum("ij,abjk->abik", a.c[i, j], b.c[: r + 1 - i, : r + 1 - j])
        return Jet(out)

    def __rmatmul__(self, M):
        return Jet(np.einsum("ij,abjk->abik", np.asarray(M, dtype=np.complex128), self.c))

    @property
    def H(self) -> "Jet":
        """Pointwise conjugate transpose (swaps the roles of dz and dzbar)."""
        return Jet(np.conj(np.swapaxes(np.swapaxes(self.c, 0, 1), 2, 3)))

    def dz(self) -> "Jet":
        r = self.order
        if r == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        a = np.arange(1, r + 1)[:, None, None, None]
        return Jet(self.c[1:, :r] * a)

    def dzbar(self) -> "Jet":
        r = self.order
        if r == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        b = np.arange(1, r + 1)[None, :, None, None]
        return Jet(self.c[:r, 1:] * b)

    def inv(self) -> "Jet":
        M0i = np.linalg.inv(self.value)
        N = self - self.value
        X = -(M0i @ N)
        term = Jet.constant(np.eye(len(M0i)), self.order)
        acc = term
        for _ in range(self.order):
            term = term @ X
            acc = acc + term
        return acc @ M0i


def _image_jet(M: Jet, tol: float = RANK_TOL) -> Jet:
    """Projector jet onto the column span of ``M`` (rank fixed at the base point)."""
    n = M.shape[0]
    U, s, Vh = np.linalg.svd(M.value)
    r = int((s > tol).sum())
    if r == 0:
        return Jet.constant(np.zeros((n, n)), M.order)
    E = M @ Vh[:r].conj().T
    return E @ (E.H @ E).inv() @ E.H


def _frame_projector(F: Jet) -> Jet:
    return F @ (F.H @ F).inv() @ F.H


# ---------------------------------------------------------------------------
# frames and bundles


@dataclass(frozen=True, eq=False)
class AnalyticFrame:
    """Matrix-valued frame ``F(z)`` with exact Taylor jets.

    ``jet(z0, order)`` returns the jet of the ``n x m`` frame about ``z0``;
    its columns span the bundle.
    """

    n: int
    m: int
    jet_fn: Callable[[complex, int], Jet]
    label: str = "custom"
    holomorphic: bool = False

    def jet(self, z0: complex, order: int) -> Jet:
        return self.jet_fn(complex(z0), order)

    def __call__(self, z: complex) -> np.ndarray:
        return self.jet(z, 0).value

    def derivatives(self, z: complex, r: int) -> list[np.ndarray]:
        """``[F, dF/dz, ..., d^r F/dz^r]`` at ``z``."""
        J = self.jet(z, r)
        return [J.c[a, 0] * math.factorial(a) for a in range(r + 1)]

    @classmethod
    def clifford(cls, n: int, scale: float = 1.0) -> "AnalyticFrame":
        """``F_i(z) = exp(w^i c z - conj(w^i c z)) / sqrt(n)`` with ``w = exp(2 pi i / n)``, ``c = scale``."""
        w = np.exp(2j * np.pi * np.arange(n) / n)
        D = np.diag(w) * scale
        v = np.ones((n, 1)) / math.sqrt(n)
        label = f"clifford({n})" if scale == 1.0 else f"clifford({n}, {scale:g})"
        return cls(n, 1, lambda z0, r: Jet.exp(D, -D.conj(), z0, r) @ v, label)

    @classmethod
    def polynomial(cls, coeffs, label: str = "polynomial") -> "AnalyticFrame":
        """Holomorphic frame ``F(z) = sum_d coeffs[d] z**d``."""
        P = np.asarray(coeffs, dtype=np.complex128)
        if P.ndim == 2:
            P = P[:, :, None]
        deg = len(P) - 1

        def jet(z0, r):
            c = np.zeros((r + 1, r + 1) + P.shape[1:], dtype=np.complex128)
            for a in range(min(r, deg) + 1):
                for d in range(a, deg + 1):
                    c[a, 0] += math.comb(d, a) * z0 ** (d - a) * P[d]
            return Jet(c)

        return cls(P.shape[1], P.shape[2], jet, label, holomorphic=True)

    @classmethod
    def veronese(cls, n: int) -> "AnalyticFrame":
        """Rational normal curve ``(sqrt(C(n-1, j)) z^j)_j``, full holomorphic into CP^{n-1}."""
        P = np.zeros((n, n, 1))
        for j in range(n):
            P[j, j, 0] = math.sqrt(math.comb(n - 1, j))
        return cls.polynomial(P, f"veronese({n})")

    def transformed(self, g) -> "AnalyticFrame":
        """Frame ``g F`` for a constant matrix ``g``."""
        g = np.asarray(g, dtype=np.complex128)
        return AnalyticFrame(self.n, self.m, lambda z0, r: g @ self.jet(z0, r), self.label, self.holomorphic)


def lift_frame(frame: AnalyticFrame, columns: int | None = None) -> AnalyticFrame:
    """Frame whose columns are ``F, F', F'', ...`` (the Clifford lift for ``columns = n``)."""
    cols = frame.n if columns is None else columns

    def jet(z0, r):
        J = frame.jet(z0, r + cols - 1)
        parts = []
        for j in range(cols):
            parts.append(J.truncate(r + cols - 1 - j))
            J = J.dz() if j < cols - 1 else J
        parts = [p.truncate(r) for p in parts]
        return Jet(np.concatenate([p.c for p in parts], axis=3))

    return AnalyticFrame(frame.n, cols * frame.m, jet, f"lift[{frame.label}]", frame.holomorphic)


class Bundle:
    """Subbundle of the trivial bundle, evaluated as projector jets."""

    def __init__(self, n: int, jet_fn: Callable[[complex, int], Jet], label: str = ""):
        self.n = n
        self._jet_fn = jet_fn
        self.label = label
        self._cached = lru_cache(maxsize=256)(self._compute)

    def _compute(self, z0: complex, order: int) -> Jet:
        return self._jet_fn(z0, order)

    def jet(self, z0: complex, order: int) -> Jet:
        return self._cached(complex(z0), int(order))

    def __call__(self, z: complex) -> np.ndarray:
        return self.jet(z, 0).value

    def rank_at(self, z: complex) -> int:
        return int(round(np.trace(self(z)).real))

    def __repr__(self) -> str:
        return f"Bundle({self.label or '?'}, n={self.n})"

    @classmethod
    def from_frame(cls, frame: AnalyticFrame) -> "Bundle":
        return cls(frame.n, lambda z0, r: _frame_projector(frame.jet(z0, r)), f"[{frame.label}]")

    @classmethod
    def constant(cls, P, label: str = "const") -> "Bundle":
        P = np.asarray(P, dtype=np.complex128)
        return cls(len(P), lambda z0, r: Jet.constant(P, r), label)

    @classmethod
    def zero(cls, n: int) -> "Bundle":
        return cls.constant(np.zeros((n, n)), "0")

    @classmethod
    def from_callable(cls, P: Callable[[complex], np.ndarray], n: int, h: float = 1e-3, label: str = "sampled") -> "Bundle":
        """Projector-valued function, differentiated by central differences (order <= 1)."""

        def jet(z0, r):
            if r > 1:
                raise ValueError("finite-difference bundles provide first-order jets only")
            P0 = np.asarray(P(z0), dtype=np.complex128)
            c = np.zeros((r + 1, r + 1, n, n), dtype=np.complex128)
            c[0, 0] = P0
            if r == 1:
                dz, dzb, est = _fd_dz(P, z0, h)
                if est > 1e-5 * max(1.0, float(np.abs(dz).max())):
                    raise GridTooCoarse(f"finite-difference disagreement {est:.2e} at z={z0}")
                c[1, 0], c[0, 1] = dz, dzb
            return Jet(c)

        return cls(n, jet, label)

    def transformed(self, g) -> "Bundle":
        """``g`` applied to the bundle, for a constant unitary ``g``."""
        g = np.asarray(g, dtype=np.complex128)
        gi = g.conj().T
        return Bundle(self.n, lambda z0, r: g @ self.jet(z0, r) @ gi, f"g·{self.label}")

    def complement(self) -> "Bundle":
        return Bundle(self.n, lambda z0, r: Jet.constant(np.eye(self.n), r) - self.jet(z0, r), f"{self.label}⊥")

    def on_grid(self, grid: ZGrid, tol: float = RANK_TOL) -> "ProjectorField":
        return ProjectorField.sample(self, grid, tol)


def _fd_dz(f: Callable, z0: complex, h: float):
    def pair(h):
        fx = (np.asarray(f(z0 + h)) - np.asarray(f(z0 - h))) / (2 * h)
        fy = (np.asarray(f(z0 + 1j * h)) - np.asarray(f(z0 - 1j * h))) / (2 * h)
        return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)

    a, ab = pair(h)
    b, bb = pair(h / 2)
    est = max(float(np.abs(b - a).max()), float(np.abs(bb - ab).max()))
    return (4 * b - a) / 3, (4 * bb - ab) / 3, est


def as_bundle(psi) -> Bundle:
    if isinstance(psi, Bundle):
        return psi
    if isinstance(psi, AnalyticFrame):
        return Bundle.from_frame(psi)
    raise TypeError(f"cannot interpret {type(psi).__name__} as a bundle")


def span(*bundles, tol: float = RANK_TOL) -> Bundle:
    """Span of several subbundles (orthogonal sum when they are orthogonal)."""
    bs = [as_bundle(b) for b in bundles]
    n = bs[0].n

    def jet(z0, r):
        S = sum((b.jet(z0, r) for b in bs[1:]), bs[0].jet(z0, r))
        return _image_jet(S, tol)

    return Bundle(n, jet, "+".join(b.label for b in bs))


def image_bundle(M: Callable[[complex, int], Jet], n: int, label: str = "image", tol: float = RANK_TOL) -> Bundle:
    return Bundle(n, lambda z0, r: _image_jet(M(z0, r), tol), label)


# ---------------------------------------------------------------------------
# second fundamental forms and Gauss bundles


def _sff_jet(B: Bundle, z0: complex, r: int) -> Jet:
    """``(I - P) dP/dz P``, the (1,0) second fundamental form as an endomorphism."""
    P = B.jet(z0, r + 1)
    dP = P.dz()
    P = P.truncate(r)
    return (Jet.constant(np.eye(B.n), r) - P) @ dP @ P


def _orthonormal_basis(P: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh((P + P.conj().T) / 2)
    return V[:, w > 0.5]


def second_fundamental_form(psi_i, psi_j, z: complex) -> np.ndarray:
    """``pi_{psi_j} d/dz`` restricted to ``psi_i``, in orthonormal frames of both bundles."""
    Bi, Bj = as_bundle(psi_i), as_bundle(psi_j)
    Ui, Uj = _orthonormal_basis(Bi(z)), _orthonormal_basis(Bj(z))
    if Bi is Bj:
        return np.zeros((Uj.shape[1], Ui.shape[1]), dtype=np.complex128)
    dP = Bi.jet(z, 1).dz().value
    return Uj.conj().T @ dP @ Ui


def gauss_bundle(psi, tol: float = RANK_TOL) -> Bundle:
    """First ``d/dz`` Gauss bundle: image of the (1,0) second fundamental form."""
    B = as_bundle(psi)
    return image_bundle(lambda z0, r: _sff_jet(B, z0, r), B.n, f"G'({B.label})", tol)


def gauss_sequence(psi, t: int) -> list[Bundle]:
    """``[psi, G1(psi), ..., Gt(psi)]``."""
    out = [as_bundle(psi)]
    for _ in range(t):
        out.append(gauss_bundle(out[-1]))
    return out


@dataclass(frozen=True)
class IsotropyOrder:
    order: int
    exceeded: bool

    def __int__(self) -> int:
        return self.order


def isotropy_order(psi, t_max: int = 8, zs: Sequence[complex] = SAMPLE_POINTS[1:3], tol: float = ARROW_TOL) -> IsotropyOrder:
    """Largest ``t <= t_max`` with ``psi`` orthogonal to ``G^(1..t)(psi)``."""
    seq = gauss_sequence(psi, t_max + 1)
    for i in range(1, t_max + 2):
        if i > t_max:
            break
        if max(float(np.linalg.norm(seq[0](z) @ seq[i](z))) for z in zs) >= tol:
            return IsotropyOrder(i - 1, False)
    return IsotropyOrder(t_max, True)


def A_z_jet(psi: Bundle, z0: complex, r: int) -> Jet:
    """``A_z`` of ``psi`` viewed in ``U(n)`` as ``pi_psi - pi_psi^perp``: ``(2P - I) dP/dz``."""
    P = psi.jet(z0, r + 1)
    return (2 * P.truncate(r) - np.eye(psi.n)) @ P.dz()


def nilconformal_check(psi, zs: Sequence[complex] = SAMPLE_POINTS) -> float:
    """Largest Frobenius norm of ``(A_z)^2`` over the sample points."""
    B = as_bundle(psi)
    out = 0.0
    for z in zs:
        A = A_z_jet(B, z, 0).value
        out = max(out, float(np.linalg.norm(A @ A)))
    return out


# ---------------------------------------------------------------------------
# diagrams


@dataclass(frozen=True, eq=False)
class Diagram:
    """Ordered mutually orthogonal subbundles ``psi_0 .. psi_t`` summing to the trivial bundle."""

    bundles: tuple
    zs: tuple = SAMPLE_POINTS[1:4]

    def __post_init__(self):
        object.__setattr__(self, "bundles", tuple(as_bundle(b) for b in self.bundles))

    @property
    def t(self) -> int:
        return len(self.bundles) - 1

    @property
    def n(self) -> int:
        return self.bundles[0].n

    def __getitem__(self, i) -> Bundle:
        return self.bundles[i]

    @classmethod
    def gauss(cls, psi, t: int, **kw) -> "Diagram":
        return cls(tuple(gauss_sequence(psi, t)), **kw)

    def orthogonality_residual(self) -> float:
        out = 0.0
        for z in self.zs:
            Ps = [b(z) for b in self.bundles]
            out = max(out, float(np.abs(sum(Ps) - np.eye(self.n)).max()))
            for i in range(len(Ps)):
                for j in range(i + 1, len(Ps)):
                    out = max(out, float(np.abs(Ps[i] @ Ps[j]).max()))
        return out

    def arrow_norms(self) -> np.ndarray:
        """``N[i, j] = max_z |A'_{psi_i, psi_j}|``."""
        m = len(self.bundles)
        N = np.zeros((m, m))
        for z in self.zs:
            for i, bi in enumerate(self.bundles):
                if bi.rank_at(z) == 0:
                    continue
                dP = bi.jet(z, 1).dz().value @ bi(z)
                for j, bj in enumerate(self.bundles):
                    if i != j:
                        N[i, j] = max(N[i, j], float(np.linalg.norm(bj(z) @ dP)))
        return N

    def arrows(self, tol: float = ARROW_TOL) -> np.ndarray:
        return self.arrow_norms() >= tol

    def closing_arrow(self, tol: float = ARROW_TOL) -> bool:
        return bool(self.arrows(tol)[self.t, 0])

    def to_dict(self) -> dict:
        N = self.arrow_norms()
        return {
            "labels": [b.label for b in self.bundles],
            "arrows": (N >= ARROW_TOL).tolist(),
            "arrow_norms": N.tolist(),
            "orthogonality_residual": self.orthogonality_residual(),
        }


def nilprop_split(
    psi_t0,
    closing=None,
    zs: Sequence[complex] = SAMPLE_POINTS[1:4],
    tol: float = ARROW_TOL,
) -> tuple[Bundle, Bundle]:
    """Split ``psi_t0 = psi_0 + psi_1`` with ``psi_0`` the kernel of its second fundamental form.

    ``psi_1`` is the image of the adjoint form, which is the orthogonal
    complement of the kernel inside ``psi_t0``. When ``closing`` (the bundle
    at the tail of the closing arrow) is given, its second fundamental form
    must land in ``psi_0``.
    """
    B = as_bundle(psi_t0)
    psi1 = image_bundle(lambda z0, r: _sff_jet(B, z0, r).H, B.n, f"im A'*({B.label})")
    psi0 = Bundle(B.n, lambda z0, r: B.jet(z0, r) - psi1.jet(z0, r), f"ker A'({B.label})")
    if closing is not None:
        C = as_bundle(closing)
        for z in zs:
            leak = float(np.linalg.norm(psi1(z) @ _sff_jet(C, z, 0).value))
            if leak > tol:
                raise NotNilconformal(f"closing arrow reaches the image part ({leak:.2e}) at z={z}")
    return psi0, psi1


def alpha_builder_gen(diagram: Diagram, d: int, k: int) -> tuple[Bundle, list[Bundle]]:
    """``psi = psi_0 + .. + psi_d`` and ``alpha_j = sum_{i<=j} psi_i + psi_{d+i+1}``."""
    t = diagram.t
    if not 1 <= d <= t - 2:
        raise ParameterOutOfRange(f"need 1 <= d <= t-2 = {t - 2}, got d={d}")
    if not 2 <= k <= min(d + 1, t - d):
        raise ParameterOutOfRange(f"need 2 <= k <= min(d+1, t-d) = {min(d + 1, t - d)}, got k={k}")
    psi = span(*diagram.bundles[: d + 1])
    alphas = []
    for j in range(k - 1):
        parts = [diagram[i] for i in range(j + 1)] + [diagram[d + i + 1] for i in range(j + 1)]
        alphas.append(span(*parts))
    return psi, alphas


def check_full(frame: AnalyticFrame, zs: Sequence[complex] = SAMPLE_POINTS[1:3], tol: float = RANK_TOL) -> None:
    """Raise :class:`NotFull` unless ``F, F', .., F^(n-1)`` span ``C^n``."""
    for z in zs:
        W = np.concatenate(frame.derivatives(z, frame.n - 1), axis=1)
        s = np.linalg.svd(W, compute_uv=False)
        if s[-1] <= tol * max(1.0, s[0]):
            raise NotFull(f"osculating frame has rank {(s > tol * max(1.0, s[0])).sum()} < {frame.n} at z={z}")


def alpha_builder_holo(frame: AnalyticFrame, k: int) -> tuple[Bundle, list[Bundle]]:
    """``alpha_j = G1 + .. + G^(j+1)`` for a full holomorphic curve."""
    if not frame.holomorphic or frame.m != 1:
        raise ValueError("expected a holomorphic curve in projective space")
    if not 2 <= k <= frame.n:
        raise ParameterOutOfRange(f"need 2 <= k <= n = {frame.n}, got k={k}")
    check_full(frame)
    seq = gauss_sequence(frame, k - 1)
    alphas = [span(*seq[1 : j + 2]) for j in range(k - 1)]
    return seq[0], alphas


# ---------------------------------------------------------------------------
# the conditions on nested subbundles


class UnitaryField:
    """``U(n)``-valued map given by exact jets, e.g. ``Psi(-1, z)``."""

    def __init__(self, n: int, jet_fn: Callable[[complex, int], Jet], label: str = ""):
        self.n = n
        self._jet_fn = jet_fn
        self.label = label

    def jet(self, z0: complex, order: int) -> Jet:
        return self._jet_fn(complex(z0), order)

    def __call__(self, z: complex) -> np.ndarray:
        return self.jet(z, 0).value

    @classmethod
    def from_bundle(cls, B: Bundle) -> "UnitaryField":
        return cls(B.n, lambda z0, r: 2 * B.jet(z0, r) - np.eye(B.n), f"2P-I[{B.label}]")

    @classmethod
    def exp_product(cls, pairs: Sequence[tuple[np.ndarray, np.ndarray]], label: str = "") -> "UnitaryField":
        """``prod exp(z X_m + zbar Y_m)`` with commuting ``X_m, Y_m`` in each factor."""
        n = len(pairs[0][0])

        def jet(z0, r):
            J = Jet.constant(np.eye(n), r)
            for X, Y in pairs:
                J = J @ Jet.exp(X, Y, z0, r)
            return J

        return cls(n, jet, label)

    @classmethod
    def from_callable(cls, f: Callable[[complex], np.ndarray], n: int, h: float = 1e-3, label: str = "sampled") -> "UnitaryField":
        def jet(z0, r):
            if r > 1:
                raise ValueError("finite-difference fields provide first-order jets only")
            c = np.zeros((r + 1, r + 1, n, n), dtype=np.complex128)
            c[0, 0] = f(z0)
            if r == 1:
                dz, dzb, est = _fd_dz(f, z0, h)
                if est > 1e-5 * max(1.0, float(np.abs(dz).max())):
                    raise GridTooCoarse(f"finite-difference disagreement {est:.2e} at z={z0}")
                c[1, 0], c[0, 1] = dz, dzb
            return Jet(c)

        return cls(n, jet, label)

    def A(self, z: complex) -> tuple[np.ndarray, np.ndarray]:
        """``(A_z, A_zbar) = 1/2 psi^{-1} (d/dz, d/dzbar) psi``."""
        J = self.jet(z, 1)
        Ui = np.linalg.inv(J.value)
        return 0.5 * Ui @ J.c[1, 0], 0.5 * Ui @ J.c[0, 1]


@dataclass(frozen=True)
class DiffConditionResult:
    r_i: float
    r_ii: float
    r_iii: float
    tol: float = PASS_TOL

    @property
    def residuals(self) -> tuple[float, float, float]:
        return self.r_i, self.r_ii, self.r_iii

    @property
    def passed(self) -> bool:
        return max(self.residuals) < self.tol

    def to_dict(self) -> dict:
        return {"r_i": self.r_i, "r_ii": self.r_ii, "r_iii": self.r_iii, "tol": self.tol, "pass": self.passed}


def diff_condition_check(psi, alphas: Sequence, zs: Sequence[complex] = SAMPLE_POINTS) -> DiffConditionResult:
    """Residuals of the three conditions making ``Psi(lambda^k)(alpha_0 + .. + lambda^{k-1} H_+)`` an extended solution.

    ``r_i``: nesting and ``d/dz alpha_j`` inside ``alpha_{j+1}``;
    ``r_ii``: ``alpha_{k-2}`` in the kernel of ``A_z`` and its image in ``alpha_0``;
    ``r_iii``: each ``alpha_j`` closed under ``d/dzbar + A_zbar``.
    """
    if isinstance(psi, (Bundle, AnalyticFrame)):
        psi = UnitaryField.from_bundle(as_bundle(psi))
    al = [as_bundle(a) for a in alphas]
    n = psi.n
    I = np.eye(n)
    r1 = r2 = r3 = 0.0
    for z in zs:
        Az, Azb = psi.A(z)
        J = [a.jet(z, 1) for a in al]
        P = [j.value for j in J]
        for j in range(len(al) - 1):
            Q = I - P[j + 1]
            r1 = max(r1, float(np.linalg.norm(Q @ P[j])), float(np.linalg.norm(Q @ J[j].dz().value @ P[j])))
        r2 = max(r2, float(np.linalg.norm(Az @ P[-1])), float(np.linalg.norm((I - P[0]) @ Az)))
        for j in range(len(al)):
            r3 = max(r3, float(np.linalg.norm((I - P[j]) @ (J[j].dzbar().value + Azb) @ P[j])))
    return DiffConditionResult(r1, r2, r3)


# ---------------------------------------------------------------------------
# grid sampling


@dataclass(frozen=True, eq=False)
class ProjectorField:
    """Projector values of a bundle on a grid, with rank diagnostics."""

    grid: ZGrid
    values: np.ndarray  # (nx, ny, n, n)
    rank: int
    singular: list = field(default_factory=list)
    label: str = ""

    @classmethod
    def sample(cls, B: Bundle, grid: ZGrid, tol: float = RANK_TOL) -> "ProjectorField":
        nodes = grid.nodes
        vals = np.zeros(nodes.shape + (B.n, B.n), dtype=np.complex128)
        ranks = np.zeros(nodes.shape, dtype=int)
        for idx in np.ndindex(nodes.shape):
            vals[idx] = B(nodes[idx])
            ranks[idx] = int(round(np.trace(vals[idx]).real))
        modal = int(np.bincount(ranks.ravel()).argmax())
        bad = np.argwhere(ranks != modal)
        if len(bad) > 0.1 * ranks.size:
            raise RankUnstable(f"{len(bad)} of {ranks.size} nodes differ from the generic rank {modal}")
        good = np.argwhere(ranks == modal)
        for i, j in bad:
            ni, nj = good[np.argmin(((good - (i, j)) ** 2).sum(axis=1))]
            vals[i, j] = vals[ni, nj]
        singular = [complex(nodes[i, j]) for i, j in bad]
        return cls(grid, vals, modal, singular, B.label)

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    def projector_defect(self) -> float:
        V = self.values
        herm = np.abs(V - np.conj(np.swapaxes(V, -1, -2))).max()
        idem = np.abs(V @ V - V).max()
        return float(max(herm, idem))

    def distance(self, other: "ProjectorField") -> float:
        return float(np.abs(self.values - other.values).max())


def projector_distance(B1, B2, zs: Sequence[complex] = SAMPLE_POINTS) -> float:
    """Largest entrywise projector difference over the sample points."""
    b1, b2 = as_bundle(B1), as_bundle(B2)
    return max(float(np.abs(b1(z) - b2(z)).max()) for z in zs)
