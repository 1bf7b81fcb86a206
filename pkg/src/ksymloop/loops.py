"""Matrix- and vector-valued loops on the unit circle.

A loop is a truncated Laurent series ``sum_m c_m lambda**m`` stored by its
coefficients over a window ``[dmin, dmax]``. The sample view at the ``K``-th
roots of unity is synthesised on demand with an FFT, so the two views are
always consistent. Pointwise operations (products, exponentials) go through
samples and are analysed back; shifts, projections and substitutions act on
coefficients directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np

from . import _kernels
from .errors import IncompatibleSampling, NonUnitModulus, NotPowerOfLambdaK, WindowOverflow

# 192 = 64 * 3 is divisible by every k in {2, 3, 4, 6, 8}
DEFAULT_SAMPLES = 192
MAX_DEGREE = 4096
TRIM_TOL = 1e-13
UNIT_MODULUS_TOL = 1e-12
FLAG_TOL = 1e-10


def fit_samples(width: int, K: int = DEFAULT_SAMPLES) -> int:
    """Smallest ``K * 2**p`` strictly larger than ``width`` (alias-free synthesis)."""
    while K <= width:
        K *= 2
    return K


def roots_of_unity(K: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(K) / K)


def _check_window(dmin: int, dmax: int) -> None:
    if dmin < -MAX_DEGREE or dmax > MAX_DEGREE:
        raise WindowOverflow(f"window [{dmin}, {dmax}] exceeds the configured maximum |degree| <= {MAX_DEGREE}")


def _trim(coeffs: np.ndarray, dmin: int, tol: float) -> tuple[np.ndarray, int, float]:
    """Drop edge coefficients with Frobenius norm below ``tol``; return the dropped l1 mass."""
    norms = np.sqrt((np.abs(coeffs) ** 2).reshape(len(coeffs), -1).sum(axis=1))
    keep = np.nonzero(norms >= tol)[0]
    if len(keep) == 0:
        z = np.zeros((1,) + coeffs.shape[1:], dtype=np.complex128)
        return z, 0, float(norms.sum())
    lo, hi = keep[0], keep[-1]
    dropped = float(norms[:lo].sum() + norms[hi + 1 :].sum())
    return coeffs[lo : hi + 1], dmin + int(lo), dropped


def _synthesise(coeffs: np.ndarray, dmin: int, K: int) -> np.ndarray:
    D = len(coeffs)
    if D > K:
        raise IncompatibleSampling(f"window width {D} does not fit {K} samples")
    buf = np.zeros((K,) + coeffs.shape[1:], dtype=np.complex128)
    idx = (dmin + np.arange(D)) % K
    buf[idx] = coeffs
    return np.fft.ifft(buf, axis=0) * K


def _analyse(samples: np.ndarray, lo: int) -> np.ndarray:
    K = len(samples)
    coef = np.fft.fft(samples, axis=0) / K
    idx = (lo + np.arange(K)) % K
    return coef[idx]


@dataclass(frozen=True, eq=False)
class _Laurent:
    """Shared storage: ``coeffs[i]`` is the coefficient of ``lambda**(dmin + i)``."""

    # let ``ndarray @ loop`` dispatch to __rmatmul__
    __array_ufunc__ = None

    coeffs: np.ndarray
    dmin: int = 0
    K: int = DEFAULT_SAMPLES
    dropped: float = field(default=0.0, compare=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if not np.all(np.isfinite(c)):
            raise ValueError("loop coefficients must be finite")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "dmin", int(self.dmin))
        object.__setattr__(self, "K", fit_samples(len(c) - 1, int(self.K)))

    @property
    def dmax(self) -> int:
        return self.dmin + len(self.coeffs) - 1

    @property
    def window(self) -> tuple[int, int]:
        return self.dmin, self.dmax

    @property
    def degrees(self) -> np.ndarray:
        return np.arange(self.dmin, self.dmax + 1)

    def coeff(self, m: int) -> np.ndarray:
        if self.dmin <= m <= self.dmax:
            return self.coeffs[m - self.dmin]
        return np.zeros(self.coeffs.shape[1:], dtype=np.complex128)

    def coeff_array(self, lo: int, hi: int) -> np.ndarray:
        """Coefficients re-embedded into the window ``[lo, hi]`` (zero padded)."""
        if lo > self.dmin or hi < self.dmax:
            raise WindowOverflow(f"window [{lo}, {hi}] does not contain [{self.dmin}, {self.dmax}]")
        out = np.zeros((hi - lo + 1,) + self.coeffs.shape[1:], dtype=np.complex128)
        out[self.dmin - lo : self.dmax - lo + 1] = self.coeffs
        return out

    @cached_property
    def samples(self) -> np.ndarray:
        return _synthesise(self.coeffs, self.dmin, self.K)

    def samples_at(self, K: int) -> np.ndarray:
        if K == self.K:
            return self.samples
        return _synthesise(self.coeffs, self.dmin, K)

    def with_samples(self, K: int):
        return replace(self, K=K)

    def trimmed(self, tol: float = TRIM_TOL):
        c, dmin, lost = _trim(self.coeffs, self.dmin, tol)
        return replace(self, coeffs=c, dmin=dmin, dropped=self.dropped + lost)

    def negative_mass(self) -> float:
        """Sum of Frobenius norms of the coefficients at negative degrees."""
        if self.dmin >= 0:
            return 0.0
        neg = self.coeffs[: min(-self.dmin, len(self.coeffs))]
        return float(np.sqrt((np.abs(neg) ** 2).reshape(len(neg), -1).sum(axis=1)).sum())

    def __call__(self, lam):
        return loop_eval(self, lam)

    def __add__(self, other):
        if not isinstance(other, _Laurent):
            return NotImplemented
        lo, hi = min(self.dmin, other.dmin), max(self.dmax, other.dmax)
        return type(self)(self.coeff_array(lo, hi) + other.coeff_array(lo, hi), lo, max(self.K, other.K))

    def __neg__(self):
        return replace(self, coeffs=-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        if isinstance(scalar, _Laurent):
            return NotImplemented
        return replace(self, coeffs=self.coeffs * scalar)

    __rmul__ = __mul__

    def distance(self, other) -> float:
        """Largest Frobenius norm of a coefficient difference."""
        d = self - other
        return float(np.sqrt((np.abs(d.coeffs) ** 2).reshape(len(d.coeffs), -1).sum(axis=1)).max())


class MatrixLoop(_Laurent):
    """Loop of ``n x m`` complex matrices (square unless built from columns)."""

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.coeffs.shape[1], self.coeffs.shape[2]

    def __post_init__(self):
        super().__post_init__()
        if self.coeffs.ndim != 3:
            raise ValueError(f"matrix loop coefficients must be 3-d, got shape {self.coeffs.shape}")

    def __matmul__(self, other):
        if isinstance(other, MatrixLoop):
            return loop_mul(self, other)
        if isinstance(other, VectorLoop):
            return apply_to_vector(self, other)
        if isinstance(other, np.ndarray):
            return MatrixLoop(self.coeffs @ other, self.dmin, self.K, self.dropped)
        return NotImplemented

    def __rmatmul__(self, other):
        if isinstance(other, np.ndarray):
            return MatrixLoop(other @ self.coeffs, self.dmin, self.K, self.dropped)
        return NotImplemented

    @property
    def H(self):
        return loop_star(self)

    def column(self, i: int) -> "VectorLoop":
        return VectorLoop(self.coeffs[:, :, i], self.dmin, self.K)

    def unitarity_defect(self) -> float:
        s = self.samples
        eye = np.eye(self.shape[0])
        return float(np.abs(s @ np.conj(np.swapaxes(s, 1, 2)) - eye).max())

    def is_unitary(self, tol: float = FLAG_TOL) -> bool:
        return self.shape[0] == self.shape[1] and self.unitarity_defect() < tol

    def based_defect(self) -> float:
        return float(np.abs(loop_eval(self, 1.0) - np.eye(self.n)).max())

    def is_based(self, tol: float = FLAG_TOL) -> bool:
        return self.based_defect() < tol

    def min_singular_value(self) -> tuple[float, complex]:
        sv = np.linalg.svd(self.samples, compute_uv=False)[:, -1]
        j = int(np.argmin(sv))
        return float(sv[j]), complex(np.exp(2j * np.pi * j / self.K))

    # -- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, M, K: int = DEFAULT_SAMPLES) -> "MatrixLoop":
        M = np.asarray(M, dtype=np.complex128)
        return cls(M[None], 0, K)

    @classmethod
    def identity(cls, n: int, K: int = DEFAULT_SAMPLES) -> "MatrixLoop":
        return cls.constant(np.eye(n), K)

    @classmethod
    def monomial(cls, M, degree: int, K: int = DEFAULT_SAMPLES) -> "MatrixLoop":
        M = np.asarray(M, dtype=np.complex128)
        return cls(M[None], degree, K)

    @classmethod
    def from_terms(cls, terms: dict, K: int = DEFAULT_SAMPLES) -> "MatrixLoop":
        """Build from ``{degree: matrix}``."""
        degs = sorted(terms)
        lo, hi = degs[0], degs[-1]
        first = np.asarray(terms[lo])
        c = np.zeros((hi - lo + 1,) + first.shape, dtype=np.complex128)
        for d, M in terms.items():
            c[d - lo] += np.asarray(M)
        return cls(c, lo, K)

    @classmethod
    def from_samples(cls, samples, lo: int | None = None, tol: float = TRIM_TOL) -> "MatrixLoop":
        """Analyse samples at the K-th roots of unity into a trimmed coefficient window.

        ``lo`` is the lowest degree of the analysis window (default ``-K//2``);
        the window always has width ``K``.
        """
        samples = np.asarray(samples, dtype=np.complex128)
        K = len(samples)
        lo = -(K // 2) if lo is None else lo
        out = cls(_analyse(samples, lo), lo, K)
        return out.trimmed(tol) if tol is not None else out

    @classmethod
    def from_function(cls, f: Callable, K: int = DEFAULT_SAMPLES, lo: int | None = None) -> "MatrixLoop":
        """Sample ``f(lam_array) -> (K, n, m)`` at the K-th roots of unity."""
        return cls.from_samples(f(roots_of_unity(K)), lo)

    @classmethod
    def from_columns(cls, cols) -> "MatrixLoop":
        lo = min(c.dmin for c in cols)
        hi = max(c.dmax for c in cols)
        return cls(np.stack([c.coeff_array(lo, hi) for c in cols], axis=2), lo, max(c.K for c in cols))

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "coeffs": [
                {"degree": int(d), "re": c.real.tolist(), "im": c.imag.tolist()}
                for d, c in zip(self.degrees, self.coeffs)
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict, K: int = DEFAULT_SAMPLES) -> "MatrixLoop":
        terms = {}
        for entry in d["coeffs"]:
            M = np.asarray(entry["re"], dtype=float) + 1j * np.asarray(entry["im"], dtype=float)
            terms[int(entry["degree"])] = M
        if not terms:
            return cls(np.zeros((1, d["n"], d["n"])), 0, K)
        out = cls.from_terms(terms, K)
        if out.shape[0] != d["n"]:
            raise ValueError(f"declared n={d['n']} but coefficients are {out.shape}")
        return out

    @classmethod
    def from_json(cls, text: str, K: int = DEFAULT_SAMPLES) -> "MatrixLoop":
        return cls.from_dict(json.loads(text), K)


class VectorLoop(_Laurent):
    """Loop of vectors in C^n, an element of the truncated L^2(S^1, C^n)."""

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    def __post_init__(self):
        super().__post_init__()
        if self.coeffs.ndim != 2:
            raise ValueError(f"vector loop coefficients must be 2-d, got shape {self.coeffs.shape}")

    def inner(self, other: "VectorLoop") -> complex:
        """L^2 inner product for the normalised arc measure (Parseval)."""
        lo, hi = min(self.dmin, other.dmin), max(self.dmax, other.dmax)
        return complex(np.vdot(other.coeff_array(lo, hi), self.coeff_array(lo, hi)))

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def stacked(self, lo: int, hi: int) -> np.ndarray:
        """Stacked Fourier coordinates over ``[lo, hi]``, degree-major."""
        return self.coeff_array(lo, hi).reshape(-1)

    @classmethod
    def from_stacked(cls, v, n: int, lo: int, K: int = DEFAULT_SAMPLES) -> "VectorLoop":
        v = np.asarray(v, dtype=np.complex128)
        return cls(v.reshape(-1, n), lo, K)


# ---------------------------------------------------------------------------
# operations


def loop_eval(gamma: _Laurent, lam) -> np.ndarray:
    """Evaluate at a point of the unit circle."""
    lam = complex(lam)
    if abs(abs(lam) - 1.0) > UNIT_MODULUS_TOL:
        raise NonUnitModulus(f"|lambda| = {abs(lam)!r} is not 1 within {UNIT_MODULUS_TOL}")
    powers = lam ** gamma.degrees.astype(float)
    return np.tensordot(powers, gamma.coeffs, axes=(0, 0))


def loop_mul(g1: MatrixLoop, g2: MatrixLoop, tol: float | None = TRIM_TOL) -> MatrixLoop:
    """Pointwise product, computed on an alias-free sample grid.

    Edge coefficients below ``tol`` are dropped and accounted for in ``dropped``.
    """
    if g1.shape[1] != g2.shape[0]:
        raise ValueError(f"incompatible loop shapes {g1.shape} @ {g2.shape}")
    lo, hi = g1.dmin + g2.dmin, g1.dmax + g2.dmax
    _check_window(lo, hi)
    K = fit_samples(hi - lo, max(g1.K, g2.K))
    prod = _kernels.matmul(g1.samples_at(K), g2.samples_at(K))
    out = MatrixLoop(_analyse(prod, lo)[: hi - lo + 1], lo, K, g1.dropped + g2.dropped)
    return out.trimmed(tol) if tol is not None else out


def apply_to_vector(g: MatrixLoop, f: VectorLoop, tol: float | None = None) -> VectorLoop:
    """Pointwise ``g(lambda) f(lambda)``; exact coefficient convolution."""
    lo, hi = g.dmin + f.dmin, g.dmax + f.dmax
    out = np.zeros((hi - lo + 1, g.shape[0]), dtype=np.complex128)
    for i, G in enumerate(g.coeffs):
        out[i : i + len(f.coeffs)] += f.coeffs @ G.T
    v = VectorLoop(out, lo, max(g.K, f.K))
    return v.trimmed(tol) if tol is not None else v


def loop_star(gamma: MatrixLoop) -> MatrixLoop:
    """Pointwise adjoint on the circle: ``c'_m = c_{-m}^*``."""
    c = np.conj(np.swapaxes(gamma.coeffs[::-1], 1, 2))
    return MatrixLoop(c, -gamma.dmax, gamma.K, gamma.dropped)


def rotate(gamma: _Laurent, omega) -> _Laurent:
    """``gamma(omega * lambda)`` for a root of unity ``omega`` compatible with the sample grid."""
    omega = complex(omega)
    if abs(abs(omega) - 1.0) > UNIT_MODULUS_TOL:
        raise NonUnitModulus(f"|omega| = {abs(omega)!r}")
    shift = np.angle(omega) / (2 * np.pi) * gamma.K
    if abs(shift - round(shift)) > 1e-9:
        raise IncompatibleSampling(f"omega = {omega} is not a {gamma.K}-th root of unity")
    phases = omega ** gamma.degrees.astype(float)
    c = gamma.coeffs * phases.reshape((-1,) + (1,) * (gamma.coeffs.ndim - 1))
    return replace(gamma, coeffs=c)


def power_substitute(gamma: _Laurent, k: int) -> _Laurent:
    """``gamma(lambda**k)``."""
    if k < 1:
        raise ValueError("k must be positive")
    lo, hi = gamma.dmin * k, gamma.dmax * k
    _check_window(lo, hi)
    c = np.zeros((hi - lo + 1,) + gamma.coeffs.shape[1:], dtype=np.complex128)
    c[::k] = gamma.coeffs
    return replace(gamma, coeffs=c, dmin=lo, K=fit_samples(hi - lo, gamma.K))


def off_multiple_norm(gamma: _Laurent, k: int) -> float:
    """Largest coefficient norm at a degree not divisible by ``k``."""
    mask = gamma.degrees % k != 0
    if not mask.any():
        return 0.0
    c = gamma.coeffs[mask]
    return float(np.sqrt((np.abs(c) ** 2).reshape(len(c), -1).sum(axis=1)).max())


def root_substitute(gamma: _Laurent, k: int, tol: float = FLAG_TOL) -> _Laurent:
    """``gamma(lambda**(1/k))`` for a loop that is a function of ``lambda**k``.

    Done by coefficient decimation, so no branch of the k-th root is chosen.
    """
    bad = off_multiple_norm(gamma, k)
    if bad > tol:
        raise NotPowerOfLambdaK(k, bad)
    lo = -((-gamma.dmin) // k)  # ceil(dmin / k)
    hi = gamma.dmax // k
    if hi < lo:
        return replace(gamma, coeffs=np.zeros((1,) + gamma.coeffs.shape[1:], dtype=np.complex128), dmin=0)
    c = np.stack([gamma.coeff(m * k) for m in range(lo, hi + 1)])
    return replace(gamma, coeffs=c, dmin=lo, K=max(DEFAULT_SAMPLES, gamma.K // k))


def project_plus(f: _Laurent) -> _Laurent:
    """Orthogonal projection onto the Hardy space: zero all negative-degree coefficients."""
    if f.dmin >= 0:
        return f
    if f.dmax < 0:
        return replace(f, coeffs=np.zeros((1,) + f.coeffs.shape[1:], dtype=np.complex128), dmin=0)
    return replace(f, coeffs=f.coeffs[-f.dmin :].copy(), dmin=0)


def loop_expm(X: MatrixLoop, K: int | None = None, lo: int | None = None) -> MatrixLoop:
    """Pointwise matrix exponential of a loop, via samples."""
    K = fit_samples(X.dmax - X.dmin, K or X.K)
    return MatrixLoop.from_samples(_kernels.expm(X.samples_at(K)), lo)


def uniton(P) -> MatrixLoop:
    """The loop ``P + lambda (I - P)`` for an orthogonal projector ``P``."""
    P = np.asarray(P, dtype=np.complex128)
    return MatrixLoop.from_terms({0: P, 1: np.eye(len(P)) - P})
