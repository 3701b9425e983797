from __future__ import annotations

import json
import subprocess
import sys

import pytest

from weaksym.cli import analyze, main
from weaksym.report import FAIL, INCONCLUSIVE, PASS, Check, Report, emit_report
from weaksym.scenarios import ScenarioError, emit_model, run_scenario


def test_empty_report_json():
    r = Report("d", 42)
    d = json.loads(emit_report(r))
    assert list(d) == ["version", "input_digest", "seed", "checks", "schema"]
    assert d["checks"] == [] and r.exit_code == 0


def test_check_key_order_and_exit_code():
    r = Report("d", 1)
    r.add(Check("a", PASS, slope=1.0, max_residual=1e-12))
    r.add(Check("b", INCONCLUSIVE))
    assert r.exit_code == 0
    r.add(Check("c", FAIL, residuals=[1.0], epsilons=[0.5], limit_estimate=2.0, expression="x"))
    assert r.exit_code == 1
    rec = json.loads(emit_report(r))["checks"][2]
    assert list(rec) == ["name", "status", "residuals", "epsilons", "limit_estimate", "expression"]


def test_text_format_one_line_per_check():
    r = Report("d", 1)
    r.add(Check("alpha", PASS))
    r.add(Check("beta", FAIL))
    lines = emit_report(r, "text").decode().splitlines()
    assert any("alpha" in l and "PASS" in l for l in lines)
    assert any("beta" in l and "FAIL" in l for l in lines)
    assert lines[-1] == "1/2 checks passed"


def test_json_is_byte_identical_across_runs():
    a = emit_report(run_scenario("hyperbolic-2x2", seed=3))
    b = emit_report(run_scenario("hyperbolic-2x2", seed=3))
    assert a == b


def test_unknown_scenario_and_override():
    with pytest.raises(ScenarioError):
        run_scenario("nope")
    with pytest.raises(ScenarioError):
        run_scenario("burgers-riemann", {"speed": "1"})
    with pytest.raises(ScenarioError):
        run_scenario("burgers-riemann", {"c": "fast"})


@pytest.mark.parametrize("name", ["hyperbolic-2x2", "semilinear-transport", "ode-counterexample"])
def test_analyze_round_trip_reproduces_scenario(tmp_path, name):
    path = tmp_path / "m.wsm"
    path.write_text(emit_model(name))
    via_file = analyze(str(path), seed=42)
    direct = run_scenario(name, seed=42).by_name()
    assert via_file.checks
    for c in via_file.checks:
        assert direct[c.name].status == c.status
        assert direct[c.name].max_residual == c.max_residual


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "g.wsm"
    good.write_text(emit_model("hyperbolic-2x2"))
    out = tmp_path / "r.json"
    assert main(["analyze", str(good), "--report", str(out), "--format", "json"]) == 0
    assert json.loads(out.read_text())["checks"]
    assert main(["analyze", str(good), "--tasks", ""]) == 0
    bad = tmp_path / "b.wsm"
    bad.write_text("[model]\nindep: x, t\ndep: u\n[system]\neq: u_t + q*u_x\n")
    assert main(["analyze", str(bad)]) == 2
    assert "b.wsm:5:11" in capsys.readouterr().err
    assert main(["analyze", str(good), "--tasks", "factor,bogus"]) == 2
    assert main(["scenario", "burgers-riemann", "--nope", "1"]) == 2
    assert main(["analyze", str(tmp_path / "missing.wsm")]) == 2


def test_cli_failing_scenario_exit_code():
    assert main(["scenario", "burgers-riemann", "--c", "0.4", "--eps", "3..10"]) == 1


def test_module_entry_point():
    p = subprocess.run([sys.executable, "-m", "weaksym", "list"], capture_output=True, text=True)
    assert p.returncode == 0 and "burgers-riemann" in p.stdout
