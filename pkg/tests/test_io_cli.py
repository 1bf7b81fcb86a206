import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ksymloop import catalog as ca
from ksymloop import cli
from ksymloop.dpw import ZGrid, integrate_potential
from ksymloop.errors import ConfigError, IoError
from ksymloop.geometry import AnalyticFrame, as_bundle
from ksymloop.io import dumps, export_field, write_json


def _report(out):
    return json.loads((out / "report.json").read_text())


def test_dumps_canonical():
    text = dumps({"b": 0.1, "a": [1, 2.5], "c": np.float64(1 / 3), "z": 1 + 2j})
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert "0.10000000000000001" in text and "0.33333333333333331" in text
    d = json.loads(text)
    assert d["z"] == {"re": 1.0, "im": 2.0} and d["c"] == 1 / 3


def test_loop_field_csv(tmp_path):
    grid = ZGrid(-0.5, 0.5, -0.5, 0.5, 3, 3)
    f = integrate_potential(ca.f111_potential(), grid)
    (path,) = export_field(f, tmp_path / "g", "csv")
    lines = path.read_text().splitlines()
    lo = min(L.dmin for _, L in f.items())
    hi = max(L.dmax for _, L in f.items())
    assert len(lines) - 1 == (hi - lo + 1) * 9
    assert lines[0].split(",")[:3] == ["degree", "x", "y"] and len(lines[0].split(",")) == 3 + 18


def test_projector_field_export(tmp_path):
    pf = as_bundle(AnalyticFrame.veronese(3)).on_grid(ZGrid(-1, 1, -1, 1, 3, 3))
    (j,) = export_field(pf, tmp_path / "p", "json")
    (c,) = export_field(pf, tmp_path / "p", "csv")
    assert json.loads(j.read_text())["rank"] == 1
    assert len(c.read_text().splitlines()) == 10
    with pytest.raises(ValueError):
        export_field(pf, tmp_path / "p", "xml")


def test_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        write_json({"a": 1}, blocker / "sub" / "out.json")


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        cli.ScenarioConfig("nope")
    with pytest.raises(ConfigError):
        cli.ScenarioConfig("factor", tol_scale=0)
    cfg = cli.ScenarioConfig("decompose", {"k": 40}, tmp_path)
    with pytest.raises(ConfigError):
        cli.run_scenario(cfg)
    with pytest.raises(ConfigError):
        cli.ScenarioConfig("f111", {"z": ["abc"]}).zs()


@pytest.mark.parametrize("scenario", cli.SCENARIOS)
def test_scenarios_pass(tmp_path, scenario):
    params = {"grid": {"x0": -0.5, "x1": 0.5, "y0": -0.5, "y1": 0.5, "nx": 3, "ny": 3}} if scenario == "run-potential" else {}
    rep = cli.run_scenario(cli.ScenarioConfig(scenario, params, tmp_path))
    assert rep.passed, [c for c in rep.checks if not c.passed]
    assert _report(tmp_path)["pass"] is True


def test_main_exit_codes(tmp_path, capsys):
    assert cli.main(["--scenario", "factor", "--out", str(tmp_path / "a")]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") >= 4
    assert cli.main(["--scenario", "factor", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert cli.main(["--scenario", "factor", "--config", str(bad)]) == 2
    # an impossible tolerance makes checks fail: exit 1
    assert cli.main(["--scenario", "decompose", "--out", str(tmp_path / "b"), "--tol-scale", "1e-30"]) == 1


def test_scenario_error_is_reported(tmp_path):
    # a singular loop is a package error: recorded in the report, not raised
    loop = tmp_path / "g.json"
    from ksymloop.loops import MatrixLoop

    loop.write_text(MatrixLoop.from_terms({0: np.eye(2), 1: -np.eye(2)}).to_json())
    rep = cli.run_scenario(cli.ScenarioConfig("factor", {"loop": str(loop)}, tmp_path / "o"))
    assert not rep.passed and "SingularLoop" in rep.error
    assert _report(tmp_path / "o")["error"] == rep.error


def test_deterministic_reports(tmp_path):
    texts = []
    for name in ("a", "b"):
        cli.main(["--scenario", "decompose", "--seed", "7", "--out", str(tmp_path / name)])
        d = _report(tmp_path / name)
        d.pop("timing")
        d.pop("artifacts")
        texts.append(dumps(d))
    assert texts[0] == texts[1]


def test_golden_identity_factorization(tmp_path):
    cli.main(["--scenario", "factor", "--out", str(tmp_path)])
    got = json.loads((tmp_path / "factorization.json").read_text())
    eye = np.eye(3).tolist()
    zero = np.zeros((3, 3)).tolist()
    assert got["Phi"] == {"n": 3, "coeffs": [{"degree": 0, "re": eye, "im": zero}]}
    assert got["b"] == got["Phi"]
    assert got["residual"] == 0 and got["negative_mass"] == 0 and got["depth"] == 24


def test_module_entry_point(tmp_path):
    env = {**os.environ, "KSYMLOOP_DISABLE_NUMBA": "1"}
    r = subprocess.run(
        [sys.executable, "-m", "ksymloop", "--scenario", "clifford", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
        env=env,
    )
    assert r.returncode == 0, r.stderr
    assert r.stdout.strip().splitlines()[-1].startswith("PASS  clifford")
