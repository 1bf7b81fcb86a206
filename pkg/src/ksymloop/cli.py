"""Scenario runner: reproduces the worked examples and property checks, writes a JSON report."""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import catalog as ca
from . import dpw
from . import geometry as ge
from . import hardy, symmetry as sy
from .errors import ConfigError, IoError, KSymLoopError
from .io import export_field, write_json
from .loops import MatrixLoop, loop_mul, uniton

SCENARIOS = ("factor", "run-potential", "decompose", "diff-check", "clifford", "f111", "veronese")
DEFAULT_Z = (0.0, 0.5, 0.5j, -0.7 + 0.3j, 1.0 + 1.0j)


@dataclass
class Check:
    name: str
    value: float
    tol: float
    passed: bool | None = None

    def __post_init__(self):
        if self.passed is None:
            self.passed = bool(self.value < self.tol)

    def to_dict(self) -> dict:
        return {"name": self.name, "value": float(self.value), "tol": float(self.tol), "pass": bool(self.passed)}


@dataclass
class Report:
    scenario: str
    config: dict
    checks: list = field(default_factory=list)
    info: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    error: str | None = None
    timing: float = 0.0

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    def check(self, name: str, value: float, tol: float) -> Check:
        c = Check(name, float(value), tol)
        self.checks.append(c)
        return c

    def expect(self, name: str, ok: bool) -> Check:
        c = Check(name, 0.0 if ok else 1.0, 0.5, bool(ok))
        self.checks.append(c)
        return c

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "config": self.config,
            "checks": [c.to_dict() for c in self.checks],
            "info": self.info,
            "artifacts": self.artifacts,
            "error": self.error,
            "pass": self.passed,
            "timing": self.timing,
        }


@dataclass
class ScenarioConfig:
    scenario: str
    params: dict = field(default_factory=dict)
    out: Path = Path("ksymloop-out")
    seed: int = 0
    tol_scale: float = 1.0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if not (self.tol_scale > 0 and np.isfinite(self.tol_scale)):
            raise ConfigError("tol-scale must be a positive number")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def tol(self, t: float) -> float:
        return t * self.tol_scale

    def get(self, key: str, default, kind=None, lo=None, hi=None):
        v = self.params.get(key, default)
        if kind is not None:
            try:
                v = kind(v)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"parameter {key!r}: {e}") from e
        if lo is not None and v < lo or hi is not None and v > hi:
            raise ConfigError(f"parameter {key!r}={v} outside [{lo}, {hi}]")
        return v

    def zs(self) -> list[complex]:
        raw = self.params.get("z", DEFAULT_Z)
        try:
            return [complex(z) if not isinstance(z, (list, tuple)) else complex(z[0], z[1]) for z in raw]
        except (TypeError, ValueError) as e:
            raise ConfigError(f"parameter 'z': {e}") from e


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e


def _grid(cfg: ScenarioConfig, default: dict) -> dpw.ZGrid:
    box = {**default, **cfg.params.get("grid", {})}
    try:
        return dpw.ZGrid(float(box["x0"]), float(box["x1"]), float(box["y0"]), float(box["y1"]), int(box["nx"]), int(box["ny"]))
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"invalid grid: {e}") from e


# ---------------------------------------------------------------------------
# scenarios


def _factor(cfg: ScenarioConfig, rep: Report) -> None:
    if "loop" in cfg.params:
        try:
            g = MatrixLoop.from_dict(_read_json(cfg.params["loop"]))
        except (KeyError, ValueError) as e:
            raise ConfigError(f"invalid loop file: {e}") from e
    else:
        g = MatrixLoop.identity(cfg.get("n", 3, int, 1, 64))
    N = cfg.params.get("N")
    res = hardy.iwasawa_factor(g, None if N is None else int(N))
    rep.check("factor residual", res.residual, cfg.tol(1e-8))
    rep.check("unitarity defect", res.Phi.unitarity_defect(), cfg.tol(1e-10))
    rep.check("negative mass of b", res.negative_mass, cfg.tol(1e-8))
    rep.check("based defect", res.Phi.based_defect(), cfg.tol(1e-10))
    rep.info["depth"] = res.depth
    rep.info["window"] = list(res.Phi.window)
    rep.artifacts.append(str(write_json(res.to_dict(), cfg.out / "factorization.json")))


def _run_potential(cfg: ScenarioConfig, rep: Report) -> None:
    src = cfg.params.get("potential")
    if src is None:
        pot = ca.f111_potential()
    else:
        try:
            pot = dpw.Potential.from_dict(src if isinstance(src, dict) else _read_json(src))
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError(f"invalid potential: {e}") from e
    grid = _grid(cfg, {"x0": -1, "x1": 1, "y0": -1, "y1": 1, "nx": 21, "ny": 21})
    field_ = dpw.extended_solution(pot, grid)
    rep.check("max factor residual", field_.diagnostics["max_residual"], cfg.tol(1e-8))
    rep.check("max negative mass", field_.diagnostics["max_negative_mass"], cfg.tol(1e-8))
    rep.check("max unitarity defect", max(L.unitarity_defect() for _, L in field_.items()), cfg.tol(1e-10))
    nverify = cfg.get("verify_points", 5, int, 0, grid.nx * grid.ny)
    nodes = [z for z, _ in field_.items()]
    picks = [nodes[i] for i in np.linspace(0, len(nodes) - 1, nverify).round().astype(int)] if nverify else []
    checks = dpw.verify_extended(field_, picks, h=cfg.get("h", 1e-2, float, 1e-6, 1.0))
    if checks:
        rep.check("extended-solution residual", max(c.residual for c in checks), cfg.tol(1e-6))
        rep.check("A_zbar + A_z^* defect", max(c.adjoint_defect for c in checks), cfg.tol(1e-6))
    windows = [dpw.uniton_degree(L) for _, L in field_.items()]
    rep.info["windows"] = {"min_degree": min(w[0] for w in windows), "max_degree": max(w[1] for w in windows)}
    rep.info["polynomial"] = all(w[2] for w in windows)
    if cfg.params.get("csv", False):
        rep.artifacts += [str(p) for p in export_field(field_, cfg.out / "Phi", "csv")]


def _decompose(cfg: ScenarioConfig, rep: Report) -> None:
    rng = np.random.default_rng(cfg.seed)
    k = cfg.get("k", 3, int, 2, 12)
    n = cfg.get("n", 4, int, 1, 16)
    count = cfg.get("instances", 1, int, 1, 10_000)
    rt = root = psi_err = 0.0
    ranks = []
    for _ in range(count):
        Psi, alphas = ca.random_k_symmetric(k, n, rng)
        Phi = sy.build_W(Psi, alphas, k)
        dec = sy.detwist(Phi, k)
        rt = max(rt, sy.build_W(dec.Psi, dec.alphas, k).distance(Phi))
        psi_err = max(psi_err, dec.Psi.distance(Psi))
        root = max(root, dec.diagnostics["root_defect"])
        ranks.append(list(dec.ranks))
    rep.check("build/detwist round trip", rt, cfg.tol(1e-7))
    rep.check("recovered Psi", psi_err, cfg.tol(1e-7))
    rep.check("phi_k^k - I", root, cfg.tol(1e-9))
    rep.info["flag_ranks"] = ranks


def _diff_check(cfg: ScenarioConfig, rep: Report) -> None:
    example = cfg.get("example", "f111", str)
    if example == "f111":
        res = ge.diff_condition_check(ca.psi_field(), ca.f111_alphas(), cfg.zs())
    elif example == "veronese":
        n = cfg.get("n", 4, int, 2, 12)
        k = cfg.get("k", 3, int, 2, n)
        psi, alphas = ge.alpha_builder_holo(ge.AnalyticFrame.veronese(n), k)
        res = ge.diff_condition_check(psi, alphas, cfg.zs())
    elif example == "clifford":
        n = cfg.get("n", 6, int, 4, 12)
        d = cfg.get("d", 2, int, 1, n)
        k = cfg.get("k", 3, int, 2, n)
        diagram = ge.Diagram.gauss(ge.AnalyticFrame.clifford(n), n - 1)
        psi, alphas = ge.alpha_builder_gen(diagram, d, k)
        res = ge.diff_condition_check(psi, alphas, cfg.zs())
    else:
        raise ConfigError(f"unknown diff-check example {example!r}")
    for name, v in zip(("(i) d/dz alpha_j in alpha_{j+1}", "(ii) kernel / image of A_z", "(iii) closed under D_zbar"), res.residuals):
        rep.check(name, v, cfg.tol(1e-6))


def _clifford(cfg: ScenarioConfig, rep: Report) -> None:
    n = cfg.get("n", 3, int, 2, 12)
    frame = ge.AnalyticFrame.clifford(n)
    zs = cfg.zs()
    seq = ge.gauss_sequence(frame, n)
    w = np.exp(2j * np.pi * np.arange(n) / n)
    for j in range(1, n):
        ref = ge.as_bundle(frame.transformed(np.diag(w**j)))
        rep.check(f"G^({j}) = [F^({j})]", ge.projector_distance(seq[j], ref, zs), cfg.tol(1e-7))
    rep.check(f"G^({n}) = phi", ge.projector_distance(seq[n], seq[0], zs), cfg.tol(1e-8))
    iso = ge.isotropy_order(frame, n + 1)
    rep.expect(f"isotropy order {iso.order} = {n - 1}", iso.order == n - 1 and not iso.exceeded)
    diagram = ge.Diagram(tuple(seq[:n]), tuple(zs[1:4]))
    rep.check("diagram orthogonality", diagram.orthogonality_residual(), cfg.tol(1e-9))
    rep.info["arrows"] = diagram.arrows().astype(int).tolist()
    for d in range(1, (n - 1) - 1):
        psi = ge.span(*seq[: d + 1])
        rep.check(f"(A_z)^2 for psi_0 + .. + G^({d})", ge.nilconformal_check(psi, zs), cfg.tol(1e-6))


def _f111(cfg: ScenarioConfig, rep: Report) -> None:
    T = ca.f111_automorphism()
    mu = ca.f111_potential()
    zs = cfg.zs()
    rep.check("potential is twisted", dpw.check_tau_twisted(mu, T), cfg.tol(1e-12))
    mb = dpw.bar_mu(mu, T)
    rep.check("xi_2 displayed", mb.distance(ca.XI[2]), cfg.tol(1e-12))
    for j in range(3):
        mj = dpw.gamma_j_potential(mb, T, j)
        rep.check(f"xi_{j} displayed", mj.distance(ca.XI[j]), cfg.tol(1e-12))
        rep.check(f"xi_{j}(1) = A", float(np.abs(mj.matrix_at_lambda(1) - ca.CYCLIC_A).max()), cfg.tol(1e-12))
    xt = dpw.reverse_bar(mb, uniton(T.flag.projectors[0]), 2)
    rep.check("xi tilde displayed", xt.distance(ca.XI_TILDE), cfg.tol(1e-12))
    vac = neg = 0.0
    for z in zs:
        r = dpw.extended_at(mu, z)
        vac = max(vac, r.Phi.distance(ca.vacuum(z)))
        neg = max(neg, r.negative_mass)
    rep.check("vacuum solution", vac, cfg.tol(1e-7))
    rep.check("negative mass of b", neg, cfg.tol(1e-8))
    res = ge.diff_condition_check(ca.psi_field(), ca.f111_alphas(), zs)
    for name, v in zip(("diff-condition (i)", "diff-condition (ii)", "diff-condition (iii)"), res.residuals):
        rep.check(name, v, cfg.tol(1e-6))
    psi = ca.psi_field()
    lit = corr = 0.0
    for z in zs:
        Az = psi.A(z)[0]
        lit = max(lit, float(np.abs(Az - ca.A_psi_displayed(z)).max()))
        corr = max(corr, float(np.abs(Az + 0.5 * ca.A_psi_displayed(z)).max()))
    rep.check("A_z of psi = -1/2 Ad(exp(zA - zbar A*)) E13", corr, cfg.tol(1e-8))
    rep.info["A_z literal display mismatch"] = lit
    prim = sy.check_primitive(ca.lift_exponential, T, zs)
    rep.check("primitive lift", prim, cfg.tol(1e-5))
    z = zs[min(1, len(zs) - 1)]
    Phi = loop_mul(T.s, ca.vacuum(z))
    dec = sy.detwist(Phi, 3)
    rep.check("Psi closed form", dec.Psi.distance(ca.psi_closed_form(z)), cfg.tol(1e-7))
    rep.info["flag_ranks"] = list(dec.ranks)


def _veronese(cfg: ScenarioConfig, rep: Report) -> None:
    n = cfg.get("n", 4, int, 2, 12)
    ks = cfg.params.get("k", list(range(2, n + 1)))
    frame = ge.AnalyticFrame.veronese(n)
    zs = cfg.zs()
    seq = ge.gauss_sequence(frame, n - 1)
    rep.check("(A_z)^2 of a holomorphic curve", ge.nilconformal_check(frame, zs), cfg.tol(1e-6))
    iso = ge.isotropy_order(frame, n + 1)
    rep.expect("isotropy order beyond t_max", iso.exceeded)
    for k in ks:
        k = int(k)
        if not 2 <= k <= n:
            raise ConfigError(f"k={k} outside [2, {n}]")
        psi, alphas = ge.alpha_builder_holo(frame, k)
        res = ge.diff_condition_check(psi, alphas, zs)
        rep.check(f"diff-condition k={k}", max(res.residuals), cfg.tol(1e-6))
    kk = n
    psi, alphas = ge.alpha_builder_holo(frame, kk)
    worst_flag = worst_half = 0.0
    ranks = None
    for z in zs:
        P = psi(z)
        Phi = sy.build_W(MatrixLoop.from_terms({0: P, 1: np.eye(n) - P}), [a(z) for a in alphas], kk)
        _, prs = sy.primitive_extract(Phi, kk, kk)
        ranks = [sy.projector_rank(p) for p in prs]
        # class j is beta_j = G^(j+1); the last class is psi itself
        worst_flag = max(worst_flag, max(float(np.abs(p - seq[(i + 1) % kk](z)).max()) for i, p in enumerate(prs)))
        if kk % 2 == 0:
            _, prs2 = sy.primitive_extract(Phi, kk, 2)
            ref = ge.span(*seq[0::2])(z)
            worst_half = max(worst_half, float(np.abs(prs2[1] - ref).max()))
    rep.expect(f"flag ranks {ranks} all one", ranks == [1] * kk)
    rep.check("flag = Gauss sequence", worst_flag, cfg.tol(1e-7))
    if kk % 2 == 0:
        rep.check("l=2 class projector = psi + G2 + ..", worst_half, cfg.tol(1e-7))


RUNNERS = {
    "factor": _factor,
    "run-potential": _run_potential,
    "decompose": _decompose,
    "diff-check": _diff_check,
    "clifford": _clifford,
    "f111": _f111,
    "veronese": _veronese,
}


def run_scenario(cfg: ScenarioConfig) -> Report:
    """Execute a scenario, write ``report.json`` into the output directory and return the report."""
    rep = Report(cfg.scenario, {"params": cfg.params, "seed": cfg.seed, "tol_scale": cfg.tol_scale})
    t0 = time.perf_counter()
    try:
        RUNNERS[cfg.scenario](cfg, rep)
    except (ConfigError, IoError):
        raise
    except KSymLoopError as e:
        rep.error = f"{type(e).__name__} in scenario {cfg.scenario}: {e}"
    rep.timing = time.perf_counter() - t0
    path = cfg.out / "report.json"
    rep.artifacts.append(str(path))
    write_json(rep.to_dict(), path)
    return rep


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ksymloop", description=__doc__)
    p.add_argument("--scenario", required=True, choices=SCENARIOS)
    p.add_argument("--config", type=Path, help="JSON file with scenario parameters")
    p.add_argument("--out", type=Path, default=Path("ksymloop-out"), help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        params = _read_json(args.config) if args.config else {}
        if not isinstance(params, dict):
            raise ConfigError("config must be a JSON object")
        cfg = ScenarioConfig(args.scenario, params, args.out, args.seed, args.tol_scale)
        rep = run_scenario(cfg)
    except (ConfigError, IoError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.3e} (tol {c.tol:.1e})")
    if rep.error:
        print(f"ERROR {rep.error}")
    print(f"{'PASS' if rep.passed else 'FAIL'}  {cfg.scenario} ({rep.timing:.2f}s) -> {cfg.out / 'report.json'}")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
