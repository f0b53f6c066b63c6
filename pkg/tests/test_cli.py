import json
import subprocess
import sys
from pathlib import Path

import pytest

from thermocontrol.angles import InvariantLevels, sign_test_component_count
from thermocontrol.cli import COMMANDS, Scenario, main, parse_scenario, run
from thermocontrol.control import ControlBudget
from thermocontrol.errors import ValidationError
from thermocontrol.gas import GasSpec

FIXTURES = Path(__file__).parent / "fixtures"
EXPECTED_EXIT = {"unreachable": 2, "invalid": 3}


def run_cli(scenario: Path, out: Path) -> subprocess.CompletedProcess:
    return subprocess.run([sys.executable, "-m", "thermocontrol", str(scenario), "--out", str(out), "--quiet"],
                          capture_output=True, text=True, timeout=300)


def test_minimal_solve_gets_defaults():
    s = parse_scenario(json.dumps({"command": "solve", "gas": {"kind": "ideal"},
                                   "endpoints": {"start": [1.5, 0.8], "end": [1.0, 1.2]}, "t0": 1.0}))
    assert s.gas == GasSpec()
    assert s.gas.n == 3 and s.gas.R == 1
    assert s.budget == ControlBudget(1.0)
    assert s.tolerances["flow"] == 1e-10
    assert s.endpoints == ((1.5, 0.8), (1.0, 1.2))


@pytest.mark.parametrize("doc, match", [
    ({"command": "solve", "budget": {"delta": -1}, "endpoints": {"start": [1, 1], "end": [1, 2]}, "t0": 1}, "delta"),
    ({"command": "integrate"}, "valid commands: maxent, applicability, solve, angles, components, virial-check"),
    ({"command": "solve", "t0": 1}, "solve requires endpoints, t0"),
    ({"command": "components", "colour": "red", "shade": 1}, "colour, shade"),
    ({"command": "components", "tolerances": {"flow": 0}}, "positive"),
    ({"command": "virial-check", "levels": {"h1": -1, "h2": 0}}, "h1"),
    ({"command": "angles", "t0": 1.0}, "phase_start or endpoints"),
    ({"command": "components", "gas": {"kind": "plasma"}}, "plasma"),
])
def test_validation_errors(doc, match):
    with pytest.raises(ValidationError, match=match):
        parse_scenario(json.dumps(doc))


def test_malformed_json():
    with pytest.raises(ValidationError):
        parse_scenario("{not json")


def test_every_command_has_a_fixture():
    names = {json.loads(p.read_text())["command"] for p in FIXTURES.glob("*.json")}
    assert names == set(COMMANDS)


@pytest.mark.parametrize("fixture", sorted(p.stem for p in FIXTURES.glob("*.json")))
def test_fixture_runs_are_byte_identical(tmp_path, fixture):
    path = FIXTURES / f"{fixture}.json"
    first, second = run_cli(path, tmp_path / "a"), run_cli(path, tmp_path / "b")
    expected = EXPECTED_EXIT.get(fixture, 0)
    assert first.returncode == second.returncode == expected, first.stderr
    files_a = sorted(p.name for p in (tmp_path / "a").iterdir())
    files_b = sorted(p.name for p in (tmp_path / "b").iterdir())
    assert files_a == files_b and files_a
    for name in files_a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        if name.endswith(".json"):
            json.loads((tmp_path / "a" / name).read_text())
    if expected:
        assert "error" in json.loads((tmp_path / "a" / "error.json").read_text())


def test_solve_summary(tmp_path):
    assert main([str(FIXTURES / "solve.json"), "--out", str(tmp_path), "--quiet"]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert {"J", "h_drift", "g_drift", "lambda0", "component_count"} <= set(summary)
    assert summary["endpoint_residual"] <= 1e-8
    header = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,q1,q2,l1,l2,e,v,H,G,J_cum"


def test_unreachable_reason(tmp_path):
    assert main([str(FIXTURES / "unreachable.json"), "--out", str(tmp_path), "--quiet"]) == 2
    assert "unreachable" in json.loads((tmp_path / "error.json").read_text())["error"]


def test_components_grid_matches_formula(tmp_path):
    s = parse_scenario((FIXTURES / "components.json").read_text())
    s = Scenario(**{**s.__dict__, "output_path": str(tmp_path)})
    assert run(s) == 0
    rep = json.loads((tmp_path / "components.json").read_text())
    assert len(rep["h1"]) == len(rep["h2"]) == 50
    assert rep["agreement"] == 1.0
    for h1, row in zip(rep["h1"], rep["components"]):
        for h2, c in zip(rep["h2"], row):
            assert c in (2, 3)
            assert c == sign_test_component_count(GasSpec(), ControlBudget(), InvariantLevels(h1, h2))


def test_angles_report(tmp_path):
    assert main([str(FIXTURES / "angles.json"), "--out", str(tmp_path), "--quiet"]) == 0
    rep = json.loads((tmp_path / "angles.json").read_text())
    assert rep["max_deviation"] <= 1e-6
    assert rep["omega1_linearity_error"] <= 1e-6


def test_virial_report(tmp_path):
    assert main([str(FIXTURES / "virial_check.json"), "--out", str(tmp_path), "--quiet"]) == 0
    rep = json.loads((tmp_path / "virial_check.json").read_text())
    assert 1.8 <= rep["slope"] <= 2.2


def test_missing_scenario_file(tmp_path, capsys):
    assert main([str(tmp_path / "nope.json"), "--quiet"]) == 3
    assert "error" in json.loads(capsys.readouterr().out)
