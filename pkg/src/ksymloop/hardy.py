"""Finite-window model of shift-invariant subspaces of L^2(S^1, C^n).

A subspace ``W = g H_+`` is represented by an orthonormal basis of the
truncation ``span{g lambda^m e_i : 0 <= m <= N}`` in stacked Fourier
coordinates. The unitary symbol of ``W`` (Beurling-Lax-Halmos) is read off the
wandering subspace ``W - SW``; with the normalisation ``Phi(1) = I`` this gives
the Iwasawa splitting ``g = Phi b`` with ``b`` holomorphic on the disc.

Truncations of the same ``W`` built from different generators differ near the
top degree (the truncation frontier). Every comparison between subspaces is
therefore made on canonical truncations ``Phi P_N`` of their unitary symbols,
which depend on ``W`` only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    DimensionMismatch,
    FactorizationFailed,
    NonUnitaryResult,
    SingularLoop,
    WrongMultiplicity,
)
from .loops import MatrixLoop, VectorLoop, fit_samples, loop_eval, loop_mul, loop_star

RANK_TOL = 1e-10
SHIFT_TOL = 1e-8
ANGLE_TOL = 1e-6
DEFAULT_DEPTH = 24


def orthonormalize(M: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column span, relative rank tolerance ``tol``."""
    if M.shape[1] == 0:
        return M
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if len(s) == 0 or s[0] == 0.0:
        return U[:, :0]
    return U[:, s > tol * s[0]]


def _embed(basis: np.ndarray, n: int, dmin: int, lo: int, hi: int) -> np.ndarray:
    """Re-embed stacked coordinates from window starting at ``dmin`` into ``[lo, hi]``."""
    D = basis.shape[0] // n
    if lo > dmin or hi < dmin + D - 1:
        raise DimensionMismatch(f"window [{lo}, {hi}] does not contain [{dmin}, {dmin + D - 1}]")
    out = np.zeros(((hi - lo + 1) * n, basis.shape[1]), dtype=np.complex128)
    off = (dmin - lo) * n
    out[off : off + basis.shape[0]] = basis
    return out


@dataclass(frozen=True, eq=False)
class TruncatedSubspace:
    """Orthonormal basis (columns) of a truncated closed subspace.

    Coordinates are stacked degree-major over the window ``[dmin, dmax]``:
    row ``(m - dmin) * n + i`` holds component ``i`` of the ``lambda**m``
    coefficient.
    """

    basis: np.ndarray
    n: int
    dmin: int
    depth: int
    label: str = field(default="", compare=False)

    @property
    def dmax(self) -> int:
        return self.dmin + self.basis.shape[0] // self.n - 1

    @property
    def window(self) -> tuple[int, int]:
        return self.dmin, self.dmax

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def orthonormality_defect(self) -> float:
        G = self.basis.conj().T @ self.basis
        return float(np.abs(G - np.eye(self.rank)).max()) if self.rank else 0.0

    def embedded(self, lo: int, hi: int) -> np.ndarray:
        return _embed(self.basis, self.n, self.dmin, lo, hi)

    def vectors(self) -> list[VectorLoop]:
        return [VectorLoop.from_stacked(c, self.n, self.dmin) for c in self.basis.T]

    def shifted(self) -> np.ndarray:
        """Basis of ``S W`` (multiplication by lambda) in the window ``[dmin, dmax + 1]``."""
        return _embed(self.basis, self.n, self.dmin + 1, self.dmin, self.dmax + 1)

    def project(self, v: np.ndarray, lo: int, hi: int) -> np.ndarray:
        """Orthogonal projection of stacked vectors given over ``[lo, hi]``."""
        Q = self.embedded(lo, hi)
        return Q @ (Q.conj().T @ v)

    @cached_property
    def _shift_split(self):
        """Split the basis into directions whose shift stays in W and the rest."""
        lo, hi = self.dmin, self.dmax + 1
        Q = self.embedded(lo, hi)
        SQ = self.shifted()
        R = SQ - Q @ (Q.conj().T @ SQ)
        _, s, Vh = np.linalg.svd(R, full_matrices=True)
        s = np.concatenate([s, np.zeros(self.rank - len(s))])
        stay = Vh[s < SHIFT_TOL].conj().T
        return Q, SQ, stay, s

    def wandering_dimension(self) -> int:
        """``dim(W) - dim(W cap SW)`` in the truncated model."""
        _, _, stay, _ = self._shift_split
        return self.rank - stay.shape[1]

    def is_shift_invariant(self) -> bool:
        """Shift-invariant up to the truncation frontier: exactly ``n`` directions leave W."""
        return self.wandering_dimension() == self.n

    def to_csv_rows(self) -> list[list[str]]:
        """Rows of stacked coordinates: real parts of all columns, then imaginary parts."""
        rows = []
        for r in self.basis:
            rows.append([f"{x:.17g}" for x in np.concatenate([r.real, r.imag])])
        return rows

    @cached_property
    def raw_symbol(self) -> MatrixLoop:
        return raw_symbol(self)

    @cached_property
    def symbol(self) -> MatrixLoop:
        return blh_symbol(self)


def span_image(g: MatrixLoop, N: int = DEFAULT_DEPTH, label: str = "") -> TruncatedSubspace:
    """Truncation of ``g H_+``: orthonormal basis of ``span{g lambda^m e_i : m <= N}``."""
    smin, lam = g.min_singular_value()
    if smin <= 1e-8:
        raise SingularLoop(lam, smin)
    n = g.shape[0]
    p = g.shape[1]
    D = g.dmax - g.dmin + 1 + N
    cols = np.zeros((D, n, (N + 1) * p), dtype=np.complex128)
    for m in range(N + 1):
        cols[m : m + len(g.coeffs), :, m * p : (m + 1) * p] = g.coeffs
    M = cols.reshape(D * n, -1)
    return TruncatedSubspace(orthonormalize(M), n, g.dmin, N, label)


def subspace_from_vectors(vectors, n: int, depth: int, label: str = "") -> TruncatedSubspace:
    lo = min(v.dmin for v in vectors)
    hi = max(v.dmax for v in vectors)
    M = np.stack([v.stacked(lo, hi) for v in vectors], axis=1)
    return TruncatedSubspace(orthonormalize(M), n, lo, depth, label)


def wandering_basis(W: TruncatedSubspace) -> list[VectorLoop]:
    """Orthonormal basis of the wandering subspace ``W - (W cap SW)``.

    Raises :class:`WrongMultiplicity` unless exactly ``n`` vectors come out.
    """
    Q, SQ, stay, _ = W._shift_split
    inter = orthonormalize(SQ @ stay)  # W cap SW, lives in W
    C = Q - inter @ (inter.conj().T @ Q)
    U, s, _ = np.linalg.svd(C, full_matrices=False)
    keep = s > 0.5
    if keep.sum() != W.n:
        raise WrongMultiplicity(
            f"wandering subspace has dimension {int(keep.sum())}, expected {W.n} "
            f"(rank {W.rank}, shift-stable {stay.shape[1]})"
        )
    return [VectorLoop.from_stacked(c, W.n, W.dmin) for c in U[:, keep].T]


def raw_symbol(W: TruncatedSubspace) -> MatrixLoop:
    """Unitary symbol with ``Phi H_+ = W``, defined up to a constant unitary on the right."""
    return MatrixLoop.from_columns(wandering_basis(W)).trimmed()


def blh_symbol(W: TruncatedSubspace, tol: float = 1e-8) -> MatrixLoop:
    """Based unitary symbol ``Phi`` with ``Phi H_+ = W`` and ``Phi(1) = I``."""
    raw = W.raw_symbol
    u1 = loop_eval(raw, 1.0)
    Phi = MatrixLoop(raw.coeffs @ np.linalg.inv(u1), raw.dmin, raw.K).trimmed()
    defect = Phi.unitarity_defect()
    if defect > tol:
        raise NonUnitaryResult(f"symbol unitarity defect {defect:.3e} exceeds {tol:.1e}; enlarge the truncation depth")
    return Phi


@dataclass(frozen=True, eq=False)
class FactorizationResult:
    Phi: MatrixLoop
    b: MatrixLoop
    residual: float
    negative_mass: float
    depth: int

    def to_dict(self) -> dict:
        return {
            "Phi": self.Phi.to_dict(),
            "b": self.b.to_dict(),
            "residual": self.residual,
            "negative_mass": self.negative_mass,
            "unitarity_defect": self.Phi.unitarity_defect(),
            "depth": self.depth,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _toeplitz_solve(g: MatrixLoop, N: int, tol: float = 1e-14, max_iter: int = 20000) -> np.ndarray:
    """Solve ``T_N(g^* g) Y = E_0`` by block conjugate gradients.

    ``T_N`` is the ``(N+1) x (N+1)`` block Toeplitz matrix of the symbol
    ``g^* g``; products with it are done by FFT on the sample grid.
    """
    n = g.shape[1]
    L = N + 1
    K = fit_samples(L + 2 * (g.dmax - g.dmin) + 1, 64)
    gs = g.samples_at(K)
    Ms = np.conj(np.swapaxes(gs, 1, 2)) @ gs

    def T(Y):
        buf = np.zeros((K, n, n), dtype=np.complex128)
        buf[:L] = Y
        s = np.fft.ifft(buf, axis=0) * K
        # symbol degrees run over [dmin - dmax, dmax - dmin]; degrees 0..N of the product are alias free
        return (np.fft.fft(Ms @ s, axis=0) / K)[:L]

    B = np.zeros((L, n, n), dtype=np.complex128)
    B[0] = np.eye(n)
    X = np.zeros_like(B)
    R = B.copy()
    P = R.copy()
    rr = np.einsum("lij,lij->j", R.conj(), R).real
    for _ in range(max_iter):
        AP = T(P)
        alpha = rr / np.einsum("lij,lij->j", P.conj(), AP).real
        X += alpha * P
        R -= alpha * AP
        rn = np.einsum("lij,lij->j", R.conj(), R).real
        if np.sqrt(rn.max()) < tol:
            return X
        P = R + (rn / rr) * P
        rr = rn
    raise FactorizationFailed(f"Toeplitz solve did not converge in {max_iter} iterations (residual {np.sqrt(rn.max()):.2e})")


def generator_symbol(g: MatrixLoop, N: int) -> tuple[MatrixLoop, float]:
    """Unitary symbol of ``g H_+`` from the truncation ``g P_N H_+``.

    The wandering vectors ``g e_i - (projection onto lambda g P_{N-1})`` are
    ``g Y`` with ``T_N(g^* g) Y = E_0``, and their Gram matrix is ``Y_0``.
    Returns the (unbased) symbol and the relative size of the last
    coefficients of ``Y``, which measures the truncation error.
    """
    smin, lam = g.min_singular_value()
    if smin <= 1e-8:
        raise SingularLoop(lam, smin)
    Y = _toeplitz_solve(g, N)
    tail = float(np.abs(Y[-min(4, len(Y)) :]).max() / np.abs(Y[0]).max())
    e, V = np.linalg.eigh(Y[0])
    if e.min() <= 0:
        raise FactorizationFailed("wandering Gram matrix is not positive definite")
    W = MatrixLoop(Y, 0, g.K).trimmed(1e-16)
    raw = loop_mul(g, W, tol=None) @ (V @ np.diag(e**-0.5) @ V.conj().T)
    return raw.trimmed(), tail


def iwasawa_factor(
    g: MatrixLoop,
    N: int | None = None,
    tol: float = 1e-6,
    tail_tol: float = 1e-14,
    max_depth: int = 2048,
) -> FactorizationResult:
    """Split ``g = Phi b`` with ``Phi`` based unitary and ``b`` extending holomorphically to the disc.

    With ``N=None`` the truncation depth starts at ``DEFAULT_DEPTH`` and is
    doubled until the wandering solution has decayed below ``tail_tol``.
    """
    if N is None:
        N = DEFAULT_DEPTH
        while True:
            raw, tail = generator_symbol(g, N)
            if tail < tail_tol or 2 * N > max_depth:
                break
            N *= 2
    else:
        raw, _ = generator_symbol(g, N)
    Phi = MatrixLoop(raw.coeffs @ np.linalg.inv(loop_eval(raw, 1.0)), raw.dmin, raw.K).trimmed()
    b = loop_mul(loop_star(Phi), g)
    recon = loop_mul(Phi, b, tol=None)
    K = _fit(recon, g, max(recon.K, g.K))
    residual = float(np.abs(recon.samples_at(K) - g.samples_at(K)).max())
    if residual > tol:
        raise FactorizationFailed(f"Iwasawa residual {residual:.3e} exceeds {tol:.1e} at depth {N}")
    return FactorizationResult(Phi, b, residual, b.negative_mass(), N)


def _fit(a: MatrixLoop, b: MatrixLoop, K: int) -> int:
    return fit_samples(max(a.dmax, b.dmax) - min(a.dmin, b.dmin), K)


def canonical_truncation(W: TruncatedSubspace, N: int | None = None) -> TruncatedSubspace:
    """The truncation ``Phi P_N`` of ``W``'s unitary symbol.

    The symbol is used unbased: the span does not see the right unitary
    ambiguity, while basing would identify e.g. ``lambda H_+`` with ``H_+``.
    """
    return span_image(W.raw_symbol, W.depth if N is None else N, W.label)


def principal_sines(Q1: np.ndarray, Q2: np.ndarray) -> np.ndarray:
    """Sines of the principal angles of span(Q1) relative to span(Q2), largest first."""
    R = Q1 - Q2 @ (Q2.conj().T @ Q1)
    return np.linalg.svd(R, compute_uv=False)


def raw_distance(W1: TruncatedSubspace, W2: TruncatedSubspace) -> float:
    """Largest principal-angle sine between the two stored truncations, as given."""
    if W1.n != W2.n:
        raise DimensionMismatch(f"n differs: {W1.n} vs {W2.n}")
    lo, hi = min(W1.dmin, W2.dmin), max(W1.dmax, W2.dmax)
    Q1, Q2 = W1.embedded(lo, hi), W2.embedded(lo, hi)
    a = principal_sines(Q1, Q2)
    b = principal_sines(Q2, Q1)
    return float(max(a.max(initial=0.0), b.max(initial=0.0)))


def subspace_distance(W1: TruncatedSubspace, W2: TruncatedSubspace) -> float:
    """Largest principal-angle sine between the canonical truncations of ``W1`` and ``W2``.

    Symmetric, and zero (to rounding) iff the two shift-invariant subspaces coincide.
    """
    if W1.n != W2.n:
        raise DimensionMismatch(f"n differs: {W1.n} vs {W2.n}")
    N = min(W1.depth, W2.depth)
    return raw_distance(canonical_truncation(W1, N), canonical_truncation(W2, N))


def containment_defect(small: TruncatedSubspace, big: TruncatedSubspace) -> float:
    """Failure of ``small`` being contained in ``big``.

    ``Phi_s H_+ <= Phi_b H_+`` iff ``Phi_b^* Phi_s`` has no negative Fourier
    modes, so the defect is that loop's negative coefficient mass.
    """
    return loop_mul(loop_star(big.raw_symbol), small.raw_symbol).negative_mass()


def shift_subspace(W: TruncatedSubspace) -> TruncatedSubspace:
    """``S W`` as a truncated subspace."""
    return TruncatedSubspace(W.basis, W.n, W.dmin + 1, W.depth, W.label)
