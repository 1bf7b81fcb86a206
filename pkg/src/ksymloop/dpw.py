"""Holomorphic potentials and the loop-group construction of extended solutions.

A potential ``mu = xi dz`` is stored as ``{(power, zdegree): matrix}`` meaning
``xi(lambda, z) = sum lambda**power z**zdegree M``, with ``power >= -1``.
Integrating ``g^{-1} dg = mu`` with ``g(0) = I`` and splitting ``g = Phi b``
gives an extended solution ``Phi``, whose logarithmic derivative has the
two-term form ``(1 - 1/lambda) A_z dz + (1 - lambda) A_zbar dzbar``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .errors import GridTooCoarse, LambdaMinusTwoLeak, NotTwisted, StepTooLarge
from .hardy import FactorizationResult, iwasawa_factor
from .loops import (
    DEFAULT_SAMPLES,
    MatrixLoop,
    fit_samples,
    loop_expm,
    loop_mul,
    loop_star,
    power_substitute,
)
from .symmetry import TwistedAutomorphism

LEAK_TOL = 1e-10
RK4_TOL = 1e-8
UNITON_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Potential:
    n: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (p, d), M in self.terms.items():
            M = np.asarray(M, dtype=np.complex128)
            if M.shape != (self.n, self.n):
                raise ValueError(f"term ({p}, {d}) has shape {M.shape}, expected {(self.n, self.n)}")
            if not np.all(np.isfinite(M)):
                raise ValueError("potential coefficients must be finite")
            if d < 0:
                raise ValueError("z-degrees must be non-negative")
            key = (int(p), int(d))
            clean[key] = clean.get(key, 0) + M
        object.__setattr__(self, "terms", clean)

    @classmethod
    def constant(cls, terms: dict) -> "Potential":
        """From ``{power: matrix}`` with no z-dependence."""
        n = len(next(iter(terms.values())))
        return cls(n, {(p, 0): M for p, M in terms.items()})

    @classmethod
    def zero(cls, n: int) -> "Potential":
        return cls(n, {})

    @property
    def is_constant(self) -> bool:
        return all(d == 0 for (_, d) in self.terms)

    @property
    def min_power(self) -> int:
        return min((p for (p, _), M in self.terms.items() if np.abs(M).max() > 0), default=0)

    @property
    def powers(self) -> list[int]:
        return sorted({p for (p, _) in self.terms})

    @property
    def zdegree(self) -> int:
        return max((d for (_, d) in self.terms), default=0)

    def coefficient(self, power: int, zdegree: int = 0) -> np.ndarray:
        return self.terms.get((power, zdegree), np.zeros((self.n, self.n), dtype=np.complex128))

    def loop(self, zdegree: int = 0, K: int = DEFAULT_SAMPLES) -> MatrixLoop:
        """The lambda-loop multiplying ``z**zdegree``."""
        ts = {p: M for (p, d), M in self.terms.items() if d == zdegree}
        if not ts:
            return MatrixLoop.constant(np.zeros((self.n, self.n)), K)
        return MatrixLoop.from_terms(ts, K)

    def at(self, z: complex) -> MatrixLoop:
        """``xi(., z)`` as a loop."""
        ts = {}
        for (p, d), M in self.terms.items():
            ts[p] = ts.get(p, 0) + M * complex(z) ** d
        if not ts:
            return MatrixLoop.constant(np.zeros((self.n, self.n)))
        return MatrixLoop.from_terms(ts)

    def in_lambda_minus_one(self, tol: float = LEAK_TOL) -> float:
        """Largest coefficient norm at powers below -1 (zero for valid potentials)."""
        return max((float(np.linalg.norm(M)) for (p, _), M in self.terms.items() if p < -1), default=0.0)

    def distance(self, other: "Potential") -> float:
        """Largest entrywise difference over all terms."""
        keys = set(self.terms) | set(other.terms)
        return max((float(np.abs(self.coefficient(*k) - other.coefficient(*k)).max()) for k in keys), default=0.0)

    def matrix_at_lambda(self, lam: complex, zdegree: int = 0) -> np.ndarray:
        return sum((complex(lam) ** p * M for (p, d), M in self.terms.items() if d == zdegree), np.zeros((self.n, self.n), dtype=np.complex128))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "terms": [
                {"power": p, "zdegree": d, "re": M.real.tolist(), "im": M.imag.tolist()}
                for (p, d), M in sorted(self.terms.items())
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, data: dict) -> "Potential":
        terms = {}
        for t in data["terms"]:
            M = np.asarray(t["re"], dtype=float) + 1j * np.asarray(t["im"], dtype=float)
            key = (int(t["power"]), int(t.get("zdegree", 0)))
            terms[key] = terms.get(key, 0) + M
        pot = cls(int(data["n"]), terms)
        if pot.in_lambda_minus_one() > 0:
            raise ValueError("potential has powers below -1")
        return pot

    @classmethod
    def from_json(cls, text: str) -> "Potential":
        return cls.from_dict(json.loads(text))


def _from_loops(n: int, loops: dict[int, MatrixLoop], tol: float = 1e-15) -> Potential:
    terms = {}
    for d, L in loops.items():
        for p, M in zip(L.degrees, L.coeffs):
            if np.abs(M).max() > tol:
                terms[(int(p), d)] = M
    return Potential(n, terms)


# ---------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True)
class ZGrid:
    """Rectangular grid ``x0 + i*hx`` by ``y0 + j*hy`` that has 0 as a node."""

    x0: float = -1.0
    x1: float = 1.0
    y0: float = -1.0
    y1: float = 1.0
    nx: int = 21
    ny: int = 21

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1 or self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError("invalid grid specification")
        for lo, h, name in ((self.x0, self.hx, "x"), (self.y0, self.hy, "y")):
            if h == 0:
                if lo != 0:
                    raise ValueError(f"degenerate {name}-range must be at 0")
                continue
            idx = -lo / h
            if abs(idx - round(idx)) > 1e-9:
                raise ValueError(f"0 is not a node of the {name}-grid")

    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / (self.nx - 1) if self.nx > 1 else 0.0

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / (self.ny - 1) if self.ny > 1 else 0.0

    @property
    def h(self) -> float:
        return max(self.hx, self.hy)

    @property
    def xs(self) -> np.ndarray:
        return self.x0 + self.hx * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.y0 + self.hy * np.arange(self.ny)

    @property
    def nodes(self) -> np.ndarray:
        """Complex nodes, shape ``(nx, ny)``."""
        return self.xs[:, None] + 1j * self.ys[None, :]

    @property
    def origin(self) -> tuple[int, int]:
        i = int(round(-self.x0 / self.hx)) if self.hx else 0
        j = int(round(-self.y0 / self.hy)) if self.hy else 0
        return i, j

    def to_dict(self) -> dict:
        return {"x0": self.x0, "x1": self.x1, "y0": self.y0, "y1": self.y1, "nx": self.nx, "ny": self.ny}


@dataclass(frozen=True, eq=False)
class LoopField:
    """Loops on a z-grid; ``evaluate`` recomputes the field off the grid when available."""

    grid: ZGrid
    values: list  # nx lists of ny MatrixLoops
    tag: str
    evaluate: Callable | None = None
    diagnostics: dict = field(default_factory=dict)

    def __getitem__(self, idx) -> MatrixLoop:
        i, j = idx
        return self.values[i][j]

    def at(self, z: complex) -> MatrixLoop:
        """Value at a node, or from the evaluator."""
        nodes = self.grid.nodes
        hit = np.argwhere(np.abs(nodes - z) < 1e-12)
        if len(hit):
            return self[tuple(hit[0])]
        if self.evaluate is None:
            raise KeyError(f"{z} is not a grid node and the field has no evaluator")
        return self.evaluate(z)

    def items(self):
        nodes = self.grid.nodes
        for i in range(self.grid.nx):
            for j in range(self.grid.ny):
                yield complex(nodes[i, j]), self.values[i][j]


# ---------------------------------------------------------------------------
# integration and splitting


def _rk4_samples(pot: Potential, z: complex, nsteps: int, K: int) -> np.ndarray:
    D = pot.zdegree + 1
    xi = np.stack([pot.loop(d).samples_at(K) for d in range(D)])
    return _kernels.rk4(xi, complex(z), nsteps)


def _sample_count(pot: Potential, z: complex) -> int:
    lo, hi = min(pot.powers, default=0), max(pot.powers, default=0)
    # exponential tails: allow generous room for the entire function of lambda
    width = (hi - lo + 1) * (8 + 8 * int(np.ceil(abs(z) * _potential_scale(pot, z))))
    return fit_samples(width, DEFAULT_SAMPLES)


def _potential_scale(pot: Potential, z: complex) -> float:
    return sum(float(np.linalg.norm(M, 2)) * max(abs(z), 1.0) ** d for (_, d), M in pot.terms.items())


def integrate_at(pot: Potential, z: complex, h: float | None = None, max_halvings: int = 8) -> MatrixLoop:
    """``g^mu(z)``: the solution of ``g^{-1} dg = mu`` with ``g(0) = I``, as a loop."""
    z = complex(z)
    if z == 0 or not pot.terms:
        return MatrixLoop.identity(pot.n)
    K = _sample_count(pot, z)
    if pot.is_constant:
        X = pot.loop(0) * z
        return loop_expm(X, K)
    h = abs(z) if h is None else h
    nsteps = max(1, int(np.ceil(abs(z) / (h / 4))))
    coarse = _rk4_samples(pot, z, nsteps, K)
    for _ in range(max_halvings + 1):
        fine = _rk4_samples(pot, z, 2 * nsteps, K)
        est = float(np.abs(fine - coarse).max()) / 15
        if est < RK4_TOL:
            return MatrixLoop.from_samples(fine + (fine - coarse) / 15)
        coarse, nsteps = fine, 2 * nsteps
    raise StepTooLarge(f"RK4 Richardson estimate {est:.2e} at z={z} after {max_halvings} halvings")


def integrate_potential(pot: Potential, grid: ZGrid) -> LoopField:
    """``g^mu`` at every grid node (straight path from 0, step at most h/4)."""
    h = grid.h or 1.0
    vals = [[integrate_at(pot, z, h) for z in row] for row in grid.nodes]
    return LoopField(grid, vals, "raw", evaluate=lambda z: integrate_at(pot, z, h))


def extended_at(pot: Potential, z: complex, h: float | None = None, N: int | None = None) -> FactorizationResult:
    return iwasawa_factor(integrate_at(pot, z, h), N)


def extended_solution(pot: Potential, grid: ZGrid, N: int | None = None) -> LoopField:
    """Unitary factor ``Phi^mu`` of ``g^mu`` at every node, with residual diagnostics."""
    h = grid.h or 1.0
    vals, res, neg = [], 0.0, 0.0
    for row in grid.nodes:
        out = []
        for z in row:
            try:
                r = extended_at(pot, z, h, N)
            except Exception as e:
                raise type(e)(f"{e} (at z={complex(z)})") from e
            res, neg = max(res, r.residual), max(neg, r.negative_mass)
            out.append(r.Phi)
        vals.append(out)
    return LoopField(
        grid,
        vals,
        "unitary",
        evaluate=lambda z: extended_at(pot, z, h, N).Phi,
        diagnostics={"max_residual": res, "max_negative_mass": neg},
    )


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True, eq=False)
class ExtendedCheck:
    A_z: np.ndarray
    A_zbar: np.ndarray
    residual: float
    adjoint_defect: float
    fd_estimate: float


def _dz_pair(f: Callable, z: complex, h: float):
    """Central differences for d/dz and d/dzbar of a loop-valued function."""
    fx = f(z + h) - f(z - h)
    fy = f(z + 1j * h) - f(z - 1j * h)
    dz = (fx - fy * 1j) * (0.5 / (2 * h))
    dzb = (fx + fy * 1j) * (0.5 / (2 * h))
    return dz, dzb


def _richardson(f: Callable, z: complex, h: float):
    a, ab = _dz_pair(f, z, h)
    b, bb = _dz_pair(f, z, h / 2)
    dz = b * (4 / 3) - a * (1 / 3)
    dzb = bb * (4 / 3) - ab * (1 / 3)
    est = max((b - a).distance(a * 0), (bb - ab).distance(ab * 0))
    return dz, dzb, est


def two_term_fit(Phi: MatrixLoop, dz: MatrixLoop, dzb: MatrixLoop) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Fit ``A_z``, ``A_zbar`` and the deviation from the two-term form."""
    star = loop_star(Phi)
    U = loop_mul(star, dz, tol=None)
    V = loop_mul(star, dzb, tol=None)
    Az = -U.coeff(-1)
    Azb = -V.coeff(1)
    n = Phi.n
    ideal_U = MatrixLoop.from_terms({-1: -Az, 0: Az})
    ideal_V = MatrixLoop.from_terms({0: Azb, 1: -Azb})
    resid = max(U.distance(ideal_U), V.distance(ideal_V))
    adj = float(np.abs(Azb + Az.conj().T).max()) if n else 0.0
    return Az, Azb, resid, adj


def verify_extended(
    field: LoopField | Callable,
    zs=None,
    h: float = 1e-2,
    derivative: Callable | None = None,
    fd_tol: float = 1e-3,
) -> list[ExtendedCheck]:
    """Check the extended-solution equation at the points ``zs``.

    Derivatives come from ``derivative(z) -> (dPhi/dz, dPhi/dzbar)`` when
    given, otherwise from Richardson-extrapolated central differences of the
    field's evaluator (step ``h``). Without an evaluator, interior grid
    nodes are differenced on the grid.
    """
    if isinstance(field, LoopField):
        f = field.evaluate
        if zs is None:
            zs = [z for z, _ in field.items()]
    else:
        f = field
    out = []
    for z in zs:
        z = complex(z)
        Phi = f(z) if f is not None else field.at(z)
        if derivative is not None:
            dz, dzb = derivative(z)
            est = 0.0
        elif f is not None:
            dz, dzb, est = _richardson(f, z, h)
        else:
            dz, dzb, est = _grid_derivative(field, z)
        if est > fd_tol:
            raise GridTooCoarse(f"finite-difference disagreement {est:.2e} at z={z}")
        Az, Azb, resid, adj = two_term_fit(Phi, dz, dzb)
        out.append(ExtendedCheck(Az, Azb, resid, adj, est))
    return out


def _grid_derivative(field: LoopField, z: complex):
    g = field.grid
    nodes = g.nodes
    i, j = map(int, np.argwhere(np.abs(nodes - z) < 1e-12)[0])
    if not (0 < i < g.nx - 1 and 0 < j < g.ny - 1):
        raise GridTooCoarse(f"z={z} is not an interior node")
    fx = (field[i + 1, j] - field[i - 1, j]) * (1 / (2 * g.hx))
    fy = (field[i, j + 1] - field[i, j - 1]) * (1 / (2 * g.hy))
    dz = (fx - fy * 1j) * 0.5
    dzb = (fx + fy * 1j) * 0.5
    est = 0.0
    if 1 < i < g.nx - 2 and 1 < j < g.ny - 2:
        fx2 = (field[i + 2, j] - field[i - 2, j]) * (1 / (4 * g.hx))
        fy2 = (field[i, j + 2] - field[i, j - 2]) * (1 / (4 * g.hy))
        est = max((fx2 - fx).distance(fx * 0), (fy2 - fy).distance(fy * 0))
        dz = dz * (4 / 3) - ((fx2 - fy2 * 1j) * 0.5) * (1 / 3)
        dzb = dzb * (4 / 3) - ((fx2 + fy2 * 1j) * 0.5) * (1 / 3)
    return dz, dzb, est


# ---------------------------------------------------------------------------
# twisted potentials


def check_tau_twisted(pot: Potential, T: TwistedAutomorphism) -> float:
    """Largest norm of a coefficient ``xi_i`` outside the eigenspace ``g^{i mod k}``."""
    return max((T.off_class_norm(M, [p % T.k]) for (p, _), M in pot.terms.items()), default=0.0)


def bar_mu(pot: Potential, T: TwistedAutomorphism, tol: float = 1e-8) -> Potential:
    """``s(lambda^{1/k}) mu(lambda^{1/k}) s(lambda^{-1/k})`` by regrading blocks.

    ``Ad s(lambda)`` scales the block ``P_r X P_c`` by ``lambda**(r - c)``, so a
    term ``lambda**i P_r X P_c`` moves to power ``(i + r - c) / k``, which is an
    integer exactly when the potential is twisted.
    """
    r = check_tau_twisted(pot, T)
    if r > tol:
        raise NotTwisted(f"potential twist residual {r:.3e} exceeds {tol:.1e}")
    Ps = T.flag.projectors
    k = T.k
    terms = {}
    for (p, d), M in pot.terms.items():
        for r_ in range(k):
            for c in range(k):
                B = Ps[r_] @ M @ Ps[c]
                e = p + r_ - c
                if e % k:
                    if np.linalg.norm(B) <= tol:
                        continue  # roundoff left by the projectors
                    raise NotTwisted(f"block ({r_}, {c}) of the lambda^{p} term has non-integral power {e}/{k}")
                key = (e // k, d)
                terms[key] = terms.get(key, 0) + B
    return Potential(pot.n, terms)


def conjugate_by_uniton(pot: Potential, P: np.ndarray, tol: float = LEAK_TOL) -> Potential:
    """``gamma^{-1} xi gamma`` for ``gamma = P + lambda (I - P)``.

    Raises :class:`LambdaMinusTwoLeak` if the result leaves ``Lambda_{-1,inf}``.
    """
    P = np.asarray(P, dtype=np.complex128)
    Q = np.eye(pot.n) - P
    terms = {}

    def add(key, M):
        terms[key] = terms.get(key, 0) + M

    for (p, d), M in pot.terms.items():
        add((p, d), P @ M @ P + Q @ M @ Q)
        add((p + 1, d), P @ M @ Q)
        add((p - 1, d), Q @ M @ P)
    out = Potential(pot.n, {k: v for k, v in terms.items() if np.abs(v).max() > 1e-15})
    leak = out.in_lambda_minus_one()
    if leak > tol:
        raise LambdaMinusTwoLeak(leak)
    return Potential(pot.n, {k: v for k, v in out.terms.items() if k[0] >= -1})


def gamma_j_potential(pot_bar: Potential, T: TwistedAutomorphism, j: int, tol: float = LEAK_TOL) -> Potential:
    """``gamma_j^{-1} mu_bar gamma_j`` with ``gamma_j = pi + lambda pi^perp``, ``pi`` onto ``A_0 + .. + A_j``."""
    P = sum(T.flag.projectors[: j + 1])
    return conjugate_by_uniton(pot_bar, P, tol)


def reverse_bar(pot: Potential, gamma: MatrixLoop, l: int, tol: float = LEAK_TOL) -> Potential:
    """``gamma(lambda)^{-1} xi(lambda**l) gamma(lambda)`` for a unitary loop ``gamma``."""
    star = loop_star(gamma)
    loops = {}
    for d in range(pot.zdegree + 1):
        X = power_substitute(pot.loop(d), l)
        loops[d] = loop_mul(loop_mul(star, X, tol=None), gamma, tol=None)
    out = _from_loops(pot.n, loops, tol=1e-14)
    leak = out.in_lambda_minus_one()
    if leak > tol:
        raise LambdaMinusTwoLeak(leak)
    return Potential(pot.n, {k: v for k, v in out.terms.items() if k[0] >= -1})


def uniton_degree(Phi: MatrixLoop, tol: float = UNITON_TOL, zero_tol: float = 1e-13) -> tuple[int, int, bool]:
    """Smallest window holding every coefficient above ``tol``, and whether the loop is polynomial.

    The loop counts as polynomial when every coefficient outside that window is
    below ``zero_tol``.
    """
    norms = np.sqrt((np.abs(Phi.coeffs) ** 2).sum(axis=(1, 2)))
    big = np.nonzero(norms > tol)[0]
    if len(big) == 0:
        return 0, 0, True
    lo, hi = int(big[0]), int(big[-1])
    outside = np.concatenate([norms[:lo], norms[hi + 1 :]])
    poly = bool(outside.max(initial=0.0) < zero_tol)
    return Phi.dmin + lo, Phi.dmin + hi, poly
