"""Scenario files, batch runs and the artifacts they leave on disk.

A scenario is a JSON document naming a mode and the inputs that mode
needs.  ``run`` executes it and writes trajectory.csv, report.json,
run_metadata.json and, for PDE runs, solver_diagnostics.json into the
output directory.
"""
import csv
import io
import json
import logging
import os
import platform
import time
import unittest
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import scipy

from . import __version__
from .cahn_hoffman import classify_annulus_cell, classify_facet
from .errors import (
    ConfigError,
    EnergyIncrease,
    FacetFlowError,
    InvalidFacet,
    InvalidGeometry,
    InvalidParam,
    ParseError,
    ValidationError,
)
from .facet_dynamics import Trajectory, boundary_onset, detect_events, evolve_1d, evolve_annulus, evolve_ball
from .geometry import DomainSpec, FacetSpec, domain_from_dict
from .pde_solver import (
    check_contraction,
    check_order_preserving,
    compare_exact,
    energy_rate,
    random_ordered_pair,
    run_flow,
    solver_diagnostics,
    velocity_estimates,
)
from .profiles import Profile, profile_from_dict
from .states_energy import FlowConfig, trace_state

logger = logging.getLogger(__name__)

MODES = ("classify", "evolve", "pde", "compare", "onset", "sweep", "selftest")
MODE_ALIASES = {"evolve_exact": "evolve", "evolve_pde": "pde"}
CSV_FORMAT = "%.17g"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ASSERTION = 2

SWEEP_DEFAULTS = {"r0_max": 3.0, "rho_max": 4.0, "n": 50, "tau": [1.0], "R": None}
TESTS_DIR = Path(__file__).parent / "tests"


@dataclass
class Scenario:
    mode: str
    domain: Optional[DomainSpec] = None
    initial: Optional[Profile] = None
    flow: Optional[FlowConfig] = None
    facet: Optional[FacetSpec] = None
    tau: float = 1.0
    trace_matched: bool = True
    gap_sign: Optional[float] = None
    chi: int = 1
    side: Optional[str] = None
    tracker: Dict[str, Any] = field(default_factory=dict)
    sweep: Dict[str, Any] = field(default_factory=dict)
    checks: Dict[str, Any] = field(default_factory=dict)
    outputs: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    source: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """The scenario with every default filled in."""
        return {
            "mode": self.mode,
            "domain": self.domain.to_dict() if self.domain else None,
            "initial": self.initial.to_dict() if self.initial else None,
            "flow": self.flow.to_dict() if self.flow else None,
            "facet": self.facet.to_dict() if self.facet else None,
            "tau": self.tau,
            "trace_matched": self.trace_matched,
            "gap_sign": self.gap_sign,
            "chi": self.chi,
            "side": self.side,
            "tracker": self.tracker,
            "sweep": self.sweep,
            "checks": self.checks,
            "outputs": self.outputs,
            "seed": self.seed,
        }


def _require(data: Dict[str, Any], key: str, where: str) -> Any:
    if key not in data or data[key] is None:
        raise ValidationError(f"{where}.{key} required" if where else f"{key} required")
    return data[key]


def _section(data: Dict[str, Any], key: str) -> Dict[str, Any]:
    value = data.get(key) or {}
    if not isinstance(value, dict):
        raise ValidationError(f"{key} must be an object")
    return value


def _flow_config(data: Dict[str, Any], need_dt: bool, tau: float) -> FlowConfig:
    flow = _section(data, "flow")
    if need_dt:
        _require(flow, "dt", "flow")
    known = {"tau", "eps", "dt", "T", "tol", "max_iter", "solver", "check_energy"}
    unknown = set(flow) - known
    if unknown:
        raise ValidationError(f"unknown flow fields: {sorted(unknown)}")
    kwargs = dict(flow)
    kwargs.setdefault("tau", tau)
    try:
        return FlowConfig(**kwargs)
    except ConfigError as e:
        raise ValidationError(f"flow: {e}")


def scenario_from_dict(data: Dict[str, Any], mode: Optional[str] = None, source: Optional[str] = None) -> Scenario:
    """Validate a parsed scenario document.

    Raises:
        ValidationError: naming the first violated requirement.
    """
    if not isinstance(data, dict):
        raise ValidationError("scenario must be a JSON object")
    mode = mode or data.get("mode")
    mode = MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")

    tau = float(data.get("tau", _section(data, "flow").get("tau", 1.0)))
    if not tau > 0:
        raise ValidationError(f"tau must be positive, got {tau}")
    scenario = Scenario(mode=mode, tau=tau, source=source,
                        trace_matched=bool(data.get("trace_matched", True)),
                        gap_sign=data.get("gap_sign"), chi=int(data.get("chi", 1)),
                        side=data.get("side"), seed=int(data.get("seed", 0)),
                        tracker=dict(_section(data, "tracker")), checks=dict(_section(data, "checks")),
                        outputs=dict(_section(data, "outputs")))
    if scenario.chi not in (1, -1):
        raise ValidationError(f"chi must be +1 or -1, got {scenario.chi}")

    if mode in ("classify", "evolve", "pde", "compare", "onset"):
        try:
            scenario.domain = domain_from_dict(_require(data, "domain", ""))
        except InvalidGeometry as e:
            raise ValidationError(f"domain: {e}")

    if mode == "classify":
        facet = _require(data, "facet", "")
        try:
            scenario.facet = FacetSpec(float(_require(facet, "inner", "facet")), float(_require(facet, "outer", "facet")),
                                       int(facet.get("chi", scenario.chi)), bool(facet.get("onset", False)))
        except InvalidFacet as e:
            raise ValidationError(f"facet: {e}")
    if mode in ("evolve", "pde", "compare"):
        scenario.initial = profile_from_dict(_require(data, "initial", ""))
        scenario.flow = _flow_config(data, need_dt=mode in ("pde", "compare"), tau=tau).resolve(scenario.domain)
        scenario.tau = scenario.flow.tau
        if mode != "pde" and scenario.domain.kind in ("ball", "annulus"):
            _require(scenario.tracker, "rho0", "tracker")
    if mode == "sweep":
        sweep = dict(SWEEP_DEFAULTS)
        sweep.update(_section(data, "sweep"))
        if not isinstance(sweep["tau"], list):
            sweep["tau"] = [sweep["tau"]]
        if int(sweep["n"]) < 1 or not sweep["r0_max"] > 0 or not sweep["rho_max"] > 0:
            raise ValidationError("sweep needs n >= 1 and positive r0_max, rho_max")
        if sweep.get("R") is not None and not float(sweep["R"]) > float(sweep["rho_max"]):
            raise ValidationError(f"sweep R={sweep['R']} must exceed rho_max={sweep['rho_max']}")
        scenario.sweep = sweep
    return scenario


def load_scenario(path: str, mode: Optional[str] = None) -> Scenario:
    """Read and validate a JSON scenario file.

    Raises:
        ParseError: if the file cannot be read or is not valid JSON.
        ValidationError: if a mode-specific requirement is violated.
    """
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as e:
        raise ParseError(f"cannot read scenario '{path}': {e}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}")
    scenario = scenario_from_dict(data, mode=mode, source=str(path))
    logger.info("Loaded %s scenario from %s", scenario.mode, path)
    return scenario


def _exact_trajectory(scenario: Scenario) -> Trajectory:
    domain, flow, tracker = scenario.domain, scenario.flow, scenario.tracker
    if domain.kind == "interval":
        return evolve_1d(scenario.initial, domain.outer, flow.tau, flow.dt, flow.T, domain.n)
    if domain.kind == "ball":
        return evolve_ball(scenario.initial, domain.outer, float(tracker["rho0"]), flow.tau, flow.dt, flow.T,
                           domain.n, a0=tracker.get("a0"))
    return evolve_annulus(scenario.initial, domain.inner, domain.outer, float(tracker["rho0"]), flow.tau, flow.dt,
                          flow.T, domain.n, sigma0=tracker.get("sigma0"))


def _write_rows(path: Path, header: List[str], rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([value if isinstance(value, str) else CSV_FORMAT % value for value in row])


def _run_classify(scenario: Scenario, out: Path) -> Dict[str, Any]:
    report = classify_facet(scenario.domain, scenario.facet, scenario.tau, scenario.trace_matched, scenario.gap_sign)
    return {"reports": [report.to_dict()], "events": [], "metrics": {}}


def _run_onset(scenario: Scenario, out: Path) -> Dict[str, Any]:
    report = boundary_onset(scenario.domain, scenario.chi, scenario.tau, scenario.side)
    return {"reports": [report.to_dict()], "events": [], "metrics": {}}


def _run_evolve(scenario: Scenario, out: Path) -> Dict[str, Any]:
    traj = _exact_trajectory(scenario)
    traj.to_csv(str(out / "trajectory.csv"))
    metrics = {"t_final": traj.times[-1], "energy_final": traj.energy[-1], "max_gap": float(np.max(traj.max_gap()))}
    if "T_cr" in traj.metadata:
        metrics["T_cr"] = traj.metadata["T_cr"]
    return {"reports": [], "events": traj.events, "detected_events": detect_events(traj),
            "metrics": metrics, "metadata": _jsonable(traj.metadata)}


def _run_checks(scenario: Scenario) -> Dict[str, Any]:
    checks = scenario.checks
    out: Dict[str, Any] = {}
    pairs = int(checks.get("order_pairs", 0))
    if pairs:
        rng = np.random.default_rng(scenario.seed)
        results = [check_order_preserving(*random_ordered_pair(scenario.domain, rng), scenario.flow, scenario.domain)
                   for _ in range(pairs)]
        out["order_pairs"] = pairs
        out["order_violations"] = results.count(False)
    if checks.get("contraction"):
        rng = np.random.default_rng(scenario.seed + 1)
        out["contraction"] = check_contraction(*random_ordered_pair(scenario.domain, rng), scenario.flow,
                                               scenario.domain)
    return out


def _run_pde(scenario: Scenario, out: Path) -> Dict[str, Any]:
    initial = trace_state(scenario.domain, scenario.initial.sample(scenario.domain))
    traj = run_flow(initial, scenario.flow, scenario.domain)
    traj.to_csv(str(out / "trajectory.csv"))
    diagnostics = solver_diagnostics(traj)
    with open(out / "solver_diagnostics.json", "w") as f:
        json.dump(diagnostics, f, indent=2)
    metrics = {"t_final": traj.times[-1], "energy_final": traj.energy[-1],
               "energy_violations": diagnostics["energy_violations"],
               "min_dissipation_excess": diagnostics["min_dissipation_excess"],
               "max_gap": float(np.max(traj.max_gap()))}
    if len(traj.times) > 1:
        metrics["initial_energy_rate"] = energy_rate(traj)
        metrics["initial_velocities"] = velocity_estimates(traj)
    metrics.update(_run_checks(scenario))
    return {"reports": [], "events": detect_events(traj), "metrics": metrics}


def _run_compare(scenario: Scenario, out: Path) -> Dict[str, Any]:
    exact = _exact_trajectory(scenario)
    traj = run_flow(exact.states[0], scenario.flow, scenario.domain)
    errors = compare_exact(traj, exact)
    edges, heights = list(errors["edges"]), list(errors["heights"])
    rows = ([t] + [errors["edges"][n][k] for n in edges] + [errors["heights"][n][k] for n in heights] + [errors["Linf"][k]]
            for k, t in enumerate(errors["times"]))
    _write_rows(out / "trajectory.csv", ["t"] + edges + heights + ["Linf_err"], rows)
    with open(out / "solver_diagnostics.json", "w") as f:
        json.dump(solver_diagnostics(traj), f, indent=2)
    metrics = {key: errors[key] for key in ("max_Linf", "max_L2", "max_gap_err", "max_edge_err", "final")}
    if len(traj.times) > 1:
        metrics["initial_velocities"] = velocity_estimates(traj)
    return {"reports": [], "events": exact.events, "metrics": metrics}


def sweep_cells(r0_max: float, rho_max: float, n: int, taus: List[float], R: Optional[float] = None,
                threads: Optional[int] = None) -> List[Dict[str, Any]]:
    """Classify every cell of an (r0, rho, tau) grid, in parallel.

    r0 runs over the cell centres of (0, r0_max), rho over n points of
    (r0, rho_max].

    Raises:
        InvalidParam: if a fixed outer radius R does not exceed rho_max.
    """
    if R is not None and not R > rho_max:
        raise InvalidParam(f"outer radius R={R} must exceed rho_max={rho_max}")
    cells = []
    for tau in taus:
        for i in range(n):
            r0 = r0_max * (i + 0.5) / n
            for j in range(n):
                rho = r0 + (rho_max - r0) * (j + 1) / n
                if rho > r0:
                    cells.append((r0, rho, float(tau)))
    threads = threads or int(os.environ.get("FACETFLOW_THREADS", os.cpu_count() or 1))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(lambda cell: classify_annulus_cell(cell[0], cell[1], cell[2], R), cells))
    return rows


def _run_sweep(scenario: Scenario, out: Path) -> Dict[str, Any]:
    sweep = scenario.sweep
    rows = sweep_cells(float(sweep["r0_max"]), float(sweep["rho_max"]), int(sweep["n"]),
                       [float(t) for t in sweep["tau"]], sweep.get("R"))
    header = ["r0", "rho", "tau", "case", "detached", "lambda", "mu"]
    _write_rows(out / "phase_diagram.csv", header,
                ([row["r0"], row["rho"], row["tau"], row["case"], str(row["detached"]).lower(), row["lambda"], row["mu"]]
                 for row in rows))
    counts: Dict[str, int] = {}
    mismatches = 0
    for row in rows:
        counts[row["case"]] = counts.get(row["case"], 0) + 1
        if row["case"] != "annulus_borderline" and row["detached"] != (row["rho"] + row["r0"] < 2.0 * row["tau"]):
            mismatches += 1
    return {"reports": [], "events": [], "metrics": {"cells": len(rows), "cases": counts,
                                                      "threshold_mismatches": mismatches}}


def _discover_suite() -> unittest.TestSuite:
    return unittest.defaultTestLoader.discover(str(TESTS_DIR), top_level_dir=str(TESTS_DIR.parent.parent))


def _run_selftest(scenario: Scenario, out: Path) -> Dict[str, Any]:
    stream = io.StringIO()
    result = unittest.TextTestRunner(stream=stream, verbosity=1).run(_discover_suite())
    (out / "selftest.log").write_text(stream.getvalue())
    metrics = {"tests_run": result.testsRun, "failures": len(result.failures), "errors": len(result.errors),
               "successful": result.wasSuccessful()}
    return {"reports": [], "events": [], "metrics": metrics}


RUNNERS = {
    "classify": _run_classify,
    "onset": _run_onset,
    "evolve": _run_evolve,
    "pde": _run_pde,
    "compare": _run_compare,
    "sweep": _run_sweep,
    "selftest": _run_selftest,
}


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def default_out_dir() -> Path:
    return Path(os.environ.get("FACETFLOW_OUT", "facetflow_out"))


def run(scenario: Scenario, out_dir: Optional[str] = None) -> int:
    """Execute a scenario, write its artifacts and return the process exit code.

    0 on success, 2 when a checked property fails (energy increase, a failed
    self test, a lost ordering) and 1 on any other error.
    """
    out = Path(out_dir) if out_dir else Path(scenario.outputs.get("dir") or default_out_dir())
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    report: Dict[str, Any] = {"mode": scenario.mode, "scenario": scenario.to_dict(), "reports": [], "events": [],
                              "metrics": {}}
    try:
        report.update(RUNNERS[scenario.mode](scenario, out))
        failed = (report["metrics"].get("successful") is False or report["metrics"].get("order_violations", 0) > 0
                  or report["metrics"].get("contraction") is False)
        report["status"] = "assertion_failed" if failed else "ok"
        code = EXIT_ASSERTION if failed else EXIT_OK
    except EnergyIncrease as e:
        logger.error("Assertion failed: %s", e)
        report.update(status="assertion_failed", message=str(e))
        code = EXIT_ASSERTION
    except FacetFlowError as e:
        logger.error("%s: %s", type(e).__name__, e)
        report.update(status="error", message=f"{type(e).__name__}: {e}")
        code = EXIT_ERROR
    except Exception as e:
        logger.exception("Unexpected failure in %s mode", scenario.mode)
        report.update(status="error", message=f"{type(e).__name__}: {e}")
        code = EXIT_ERROR

    with open(out / "report.json", "w") as f:
        json.dump(_jsonable(report), f, indent=2, sort_keys=True)
    metadata = {
        "scenario": scenario.to_dict(),
        "source": scenario.source,
        "versions": {"facetflow": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "wall_time": time.time() - started,
        "exit_code": code,
    }
    with open(out / "run_metadata.json", "w") as f:
        json.dump(_jsonable(metadata), f, indent=2, sort_keys=True)
    logger.info("Run finished with status %s; artifacts in %s", report.get("status"), out)
    return code
