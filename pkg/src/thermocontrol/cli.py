"""Scenario runner: ``thermocontrol scenario.json [--out DIR] [--quiet]``.

A scenario is a JSON document naming a command plus its inputs. Outputs
(CSV traces, JSON reports) go to ``output_path``. Exit status is 0 on
success, 2 when a solver fails to converge and 3 when the scenario is invalid.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import angles, dynamics, maxent, virial
from .control import ControlBudget, PhasePoint, ReducedHamiltonian
from .errors import ConvergenceError, ThermoControlError, ValidationError
from .gas import GasSpec, applicability, state_from_ev

log = logging.getLogger("thermocontrol")

EXIT_OK, EXIT_SOLVER, EXIT_INVALID = 0, 2, 3

COMMANDS = ("maxent", "applicability", "solve", "angles", "components", "virial-check")

_COMMON = {"command", "gas", "budget", "output_path", "tolerances", "seed"}
# command -> (required keys, optional keys)
_SCHEMA = {
    "maxent": ({"measurement"}, set()),
    "applicability": ({"grid"}, set()),
    "solve": ({"endpoints", "t0"}, {"exhaustive", "samples"}),
    "angles": ({"t0"}, {"phase_start", "endpoints", "samples"}),
    "components": (set(), {"grid"}),
    "virial-check": ({"levels"}, {"eps", "direction", "points"}),
}
_TOLERANCE_DEFAULTS = {"flow": 1e-10, "shoot": 1e-8}


@dataclass(frozen=True)
class Scenario:
    command: str
    gas: GasSpec = field(default_factory=GasSpec)
    budget: ControlBudget = field(default_factory=ControlBudget)
    endpoints: Optional[tuple] = None       # ((e1, v1), (e2, v2))
    t0: Optional[float] = None
    levels: Optional[angles.InvariantLevels] = None
    output_path: str = "."
    tolerances: dict = field(default_factory=lambda: dict(_TOLERANCE_DEFAULTS))
    seed: int = 0
    options: dict = field(default_factory=dict)   # command-specific inputs


def _pair(value, name) -> tuple:
    try:
        a, b = value
        return float(a), float(b)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a pair of numbers") from None


def parse_scenario(text: str) -> Scenario:
    """Validate a scenario document and fill defaults (n=3, R=1, delta=1,
    flow tolerance 1e-10)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scenario is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError("scenario must be a JSON object")
    command = doc.get("command")
    if command not in COMMANDS:
        raise ValidationError(f"unknown command {command!r}; valid commands: {', '.join(COMMANDS)}")
    required, optional = _SCHEMA[command]
    unknown = set(doc) - _COMMON - required - optional
    if unknown:
        raise ValidationError(f"unknown keys for {command}: {', '.join(sorted(unknown))}")
    missing = required - set(doc)
    if missing:
        raise ValidationError(f"{command} requires {', '.join(sorted(required))}; "
                              f"missing {', '.join(sorted(missing))}")
    if command == "angles" and "phase_start" not in doc and "endpoints" not in doc:
        raise ValidationError("angles requires phase_start or endpoints")

    try:
        gas = GasSpec.from_json(doc.get("gas", {}))
        b = doc.get("budget", {})
        if set(b) - {"delta"}:
            raise ValidationError(f"unknown budget keys: {', '.join(sorted(set(b) - {'delta'}))}")
        budget = ControlBudget(float(b.get("delta", 1.0)))
    except ValidationError:
        raise
    except (ThermoControlError, TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from None

    tolerances = dict(_TOLERANCE_DEFAULTS)
    for name, val in doc.get("tolerances", {}).items():
        if name not in _TOLERANCE_DEFAULTS:
            raise ValidationError(f"unknown tolerance {name!r}")
        if not (isinstance(val, (int, float)) and val > 0 and math.isfinite(val)):
            raise ValidationError(f"tolerance {name!r} must be positive")
        tolerances[name] = float(val)

    endpoints = None
    if "endpoints" in doc:
        ep = doc["endpoints"]
        if not isinstance(ep, dict) or set(ep) != {"start", "end"}:
            raise ValidationError("endpoints must be {\"start\": [e, v], \"end\": [e, v]}")
        endpoints = (_pair(ep["start"], "endpoints.start"), _pair(ep["end"], "endpoints.end"))
    t0 = None
    if "t0" in doc:
        t0 = float(doc["t0"])
        if not t0 > 0:
            raise ValidationError("t0 must be positive")
    levels = None
    if "levels" in doc:
        lv = doc["levels"]
        if not isinstance(lv, dict) or set(lv) != {"h1", "h2"}:
            raise ValidationError("levels must be {\"h1\": ..., \"h2\": ...}")
        try:
            levels = angles.InvariantLevels(float(lv["h1"]), float(lv["h2"]))
        except ThermoControlError as exc:
            raise ValidationError(str(exc)) from None
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ValidationError("seed must be a nonnegative integer")
    options = {k: doc[k] for k in (required | optional) - {"endpoints", "t0", "levels"} if k in doc}
    return Scenario(command=command, gas=gas, budget=budget, endpoints=endpoints, t0=t0,
                    levels=levels, output_path=str(doc.get("output_path", ".")),
                    tolerances=tolerances, seed=seed, options=options)


# ----------------------------------------------------------- outputs

def _clean(obj):
    """JSON-safe copy: numpy scalars to float, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _linspace(spec, name, default_count):
    try:
        lo, hi, *rest = spec
        count = int(rest[0]) if rest else default_count
    except (TypeError, ValueError):
        raise ValidationError(f"grid.{name} must be [lo, hi] or [lo, hi, count]") from None
    if count < 1 or not hi >= lo:
        raise ValidationError(f"grid.{name} needs lo <= hi and a positive count")
    return np.linspace(float(lo), float(hi), count)


# ----------------------------------------------------------- commands

def _run_maxent(s: Scenario, out: Path) -> dict:
    m = s.options["measurement"]
    if not isinstance(m, dict) or set(m) != {"base_probs", "random_vector", "target"}:
        raise ValidationError("measurement needs base_probs, random_vector and target")
    meas = maxent.DiscreteMeasurement(m["base_probs"], m["random_vector"], m["target"])
    sol = maxent.solve_lambda(meas)
    report = sol.to_json()
    report["residual"] = sol.residual
    _write_json(out / "maxent.json", report)
    return report


def _run_applicability(s: Scenario, out: Path) -> dict:
    grid = s.options["grid"]
    if not isinstance(grid, dict) or set(grid) != {"e", "v"}:
        raise ValidationError("applicability grid needs e and v ranges")
    es, vs = _linspace(grid["e"], "e", 20), _linspace(grid["v"], "v", 20)
    rows = []
    for e in es:
        row = []
        for v in vs:
            try:
                row.append(applicability(s.gas, state_from_ev(s.gas, e, v)))
            except ThermoControlError:
                row.append(False)
        rows.append(row)
    report = {"gas": s.gas.to_json(), "e": list(es), "v": list(vs), "applicable": rows}
    _write_json(out / "applicability.json", report)
    return report


def _components_of(s: Scenario, x: np.ndarray) -> Optional[int]:
    levels = angles.InvariantLevels.of(s.gas, s.budget, x)
    if levels.h1 == 0 and levels.h2 == 0:
        return None
    return angles.sign_test_component_count(s.gas, s.budget, levels)


def _run_solve(s: Scenario, out: Path) -> dict:
    (e1, v1), (e2, v2) = s.endpoints
    problem = dynamics.ShootingProblem((e1, v1), (e2, v2), s.t0, s.gas, s.budget)
    res = dynamics.shoot(problem, tol=s.tolerances["shoot"], flow_tol=s.tolerances["flow"],
                         exhaustive=bool(s.options.get("exhaustive", False)),
                         n_samples=int(s.options.get("samples", dynamics.DEFAULT_SAMPLES)))
    traj = res.trajectory
    traj.to_csv(out / "trajectory.csv", s.gas)
    report = {
        "J": res.work,
        "h_drift": traj.h_drift,
        "g_drift": traj.g_drift,
        "lambda0": list(res.lambda0),
        "component_count": _components_of(s, traj.states[0]),
        "endpoint_residual": res.residual,
        "multiple_solutions": res.multiple,
    }
    _write_json(out / "summary.json", report)
    return report


def _run_angles(s: Scenario, out: Path) -> dict:
    if "phase_start" in s.options:
        try:
            start = PhasePoint(*(float(c) for c in s.options["phase_start"]))
        except TypeError:
            raise ValidationError("phase_start must be [q1, q2, l1, l2]") from None
        traj = dynamics.extremal(s.gas, s.budget, start, s.t0, tol=s.tolerances["flow"],
                                 n_samples=int(s.options.get("samples", dynamics.DEFAULT_SAMPLES)))
    else:
        (e1, v1), (e2, v2) = s.endpoints
        problem = dynamics.ShootingProblem((e1, v1), (e2, v2), s.t0, s.gas, s.budget)
        traj = dynamics.shoot(problem, tol=s.tolerances["shoot"], flow_tol=s.tolerances["flow"],
                              n_samples=int(s.options.get("samples", dynamics.DEFAULT_SAMPLES))).trajectory
        start = traj.point(0)
    levels = angles.InvariantLevels.of(s.gas, s.budget, start)
    w1, w2 = angles.angles_along(s.gas, s.budget, traj.states, levels)
    lin1 = float(np.max(np.abs(w1 - w1[0] - traj.times)))
    lin2 = float(np.max(np.abs(w2 - w2[0])))
    # closed-form propagation checked on a coarse subset of the samples
    idx = np.unique(np.linspace(0, len(traj) - 1, 21).astype(int))
    dev, flips = 0.0, 0
    for i in idx:
        prop = angles.propagate_angles(s.gas, s.budget, levels, start, float(traj.times[i]))
        dev = max(dev, float(np.max(np.abs(prop.point.as_array() - traj.states[i]))))
        flips = max(flips, prop.flips)
    traj.to_csv(out / "trajectory.csv", s.gas)
    report = {
        "levels": levels.to_json(),
        "component_count": _components_of(s, traj.states[0]),
        "omega1_linearity_error": lin1,
        "omega2_constancy_error": lin2,
        "max_deviation": dev,
        "branch_flips": flips,
        "h_drift": traj.h_drift,
        "g_drift": traj.g_drift,
    }
    _write_json(out / "angles.json", report)
    return report


def _run_components(s: Scenario, out: Path) -> dict:
    grid = s.options.get("grid", {"h1": [0.05, 5.0, 50], "h2": [-5.0, 5.0, 50]})
    if not isinstance(grid, dict) or set(grid) != {"h1", "h2"}:
        raise ValidationError("components grid needs h1 and h2 ranges")
    h1s, h2s = _linspace(grid["h1"], "h1", 50), _linspace(grid["h2"], "h2", 50)
    counts, checked, skipped, agree = [], 0, 0, 0
    for h1 in h1s:
        row = []
        for h2 in h2s:
            lv = angles.InvariantLevels(float(h1), float(h2))
            if lv.h1 == 0 and lv.h2 == 0:
                row.append(None)
                skipped += 1
                continue
            formula = angles.sign_test_component_count(s.gas, s.budget, lv)
            row.append(formula)
            if angles.is_degenerate_levels(s.gas, s.budget, lv):
                skipped += 1
                continue
            checked += 1
            agree += angles.root_interval_count(s.gas, s.budget, lv) == formula
        counts.append(row)
    report = {"h1": list(h1s), "h2": list(h2s), "components": counts,
              "checked": checked, "skipped": skipped, "agreement": agree / checked if checked else None}
    _write_json(out / "components.json", report)
    return report


def _run_virial(s: Scenario, out: Path) -> dict:
    eps = s.options.get("eps", [1e-2, 3e-3, 1e-3, 3e-4])
    direction = s.options.get("direction", [1.0, 1.0])
    n_points = s.options.get("points", 3)
    if not (isinstance(n_points, int) and n_points > 0):
        raise ValidationError("points must be a positive integer")
    rep = virial.commutation_order_check(s.gas, s.budget, s.levels, eps,
                                         direction=_pair(direction, "direction"),
                                         n_points=n_points, seed=s.seed)
    report = rep.to_json()
    _write_json(out / "virial_check.json", report)
    return report


_RUNNERS = {
    "maxent": _run_maxent,
    "applicability": _run_applicability,
    "solve": _run_solve,
    "angles": _run_angles,
    "components": _run_components,
    "virial-check": _run_virial,
}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConvergenceError):
        return EXIT_SOLVER
    if isinstance(exc, ArithmeticError):
        return EXIT_SOLVER
    return EXIT_INVALID


def run(s: Scenario) -> int:
    """Execute a scenario, writing its outputs; returns the exit status."""
    out = Path(s.output_path)
    out.mkdir(parents=True, exist_ok=True)
    try:
        _RUNNERS[s.command](s, out)
    except (ThermoControlError, ArithmeticError, ValueError) as exc:
        code = _exit_code(exc)
        log.error("%s failed: %s", s.command, exc)
        _write_json(out / "error.json", {"error": str(exc), "type": type(exc).__name__, "exit_status": code})
        return code
    log.info("%s finished; outputs in %s", s.command, out)
    return EXIT_OK


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(prog="thermocontrol", description=__doc__.splitlines()[0])
    parser.add_argument("scenario", help="path to the scenario JSON file")
    parser.add_argument("--out", help="output directory (overrides output_path)")
    parser.add_argument("--quiet", action="store_true", help="suppress progress lines on stderr")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        text = Path(args.scenario).read_text()
        s = parse_scenario(text)
    except (OSError, ValidationError) as exc:
        log.error("%s", exc)
        out = Path(args.out) if args.out else None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            _write_json(out / "error.json", {"error": str(exc), "type": type(exc).__name__,
                                             "exit_status": EXIT_INVALID})
        else:
            print(json.dumps({"error": str(exc)}), file=sys.stdout)
        return EXIT_INVALID
    if args.out:
        s = Scenario(**{**s.__dict__, "output_path": args.out})
    return run(s)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
