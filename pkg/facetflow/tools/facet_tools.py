import json
import logging
import os
from typing import Optional

from ..cahn_hoffman import classify_facet
from ..errors import FacetFlowError
from ..facet_dynamics import boundary_onset
from ..geometry import FacetSpec, make_domain
from ..scenario import load_scenario, run, sweep_cells

try:
    from google.adk.tools import FunctionTool
    ADK_AVAILABLE = True
except ImportError:
    ADK_AVAILABLE = False

logger = logging.getLogger(__name__)

# this should point to the workspace root (parent of the facetflow folder)
PROJECT_ROOT = os.path.abspath(os.environ.get(
    "FACETFLOW_ROOT", os.path.dirname(os.path.dirname(os.path.dirname(__file__)))))


def _is_path_safe(path: str) -> bool:
    """Checks if the provided path is within the project root."""
    abs_path = os.path.abspath(os.path.join(PROJECT_ROOT, path))
    return abs_path == PROJECT_ROOT or abs_path.startswith(PROJECT_ROOT + os.sep)


def classify_facet_tool(kind: str, inner: float, outer: float, chi: int = 1, tau: float = 1.0,
                        r0: Optional[float] = None, R: Optional[float] = None, L: Optional[float] = None) -> str:
    """Classifies the radial facet {inner <= |x| <= outer} as coherent, detached or interior.

    Args:
        kind: 'interval', 'ball' or 'annulus'
        inner, outer: the facet radii (or end points on the interval)
        chi: +1 if the surrounding profile increases outwards, -1 otherwise
        tau: weight of the dynamic boundary layer
        r0, R, L: domain size
    """
    try:
        domain = make_domain(kind, L=L, R=R, r0=r0)
        report = classify_facet(domain, FacetSpec(inner, outer, chi, onset=inner == outer), tau)
    except FacetFlowError as e:
        return f"Error: {e}"
    return json.dumps(report.to_dict(), indent=2)


def boundary_onset_tool(r0: float, R: float, chi: int = 1, tau: float = 1.0) -> str:
    """Says whether a facet forms, nothing happens or the boundary layer detaches at the inner circle of A(r0, R)."""
    try:
        domain = make_domain("annulus", r0=r0, R=R, gamma="inner")
        report = boundary_onset(domain, chi, tau)
    except FacetFlowError as e:
        return f"Error: {e}"
    return json.dumps(report.to_dict(), indent=2)


def detachment_sweep_tool(r0_max: float = 3.0, rho_max: float = 4.0, n: int = 20, tau: float = 1.0) -> str:
    """Phase diagram of the inner-circle facet over an (r0, rho) grid, summarized by case."""
    if n < 1 or n > 200:
        return "Error: n must be between 1 and 200."
    try:
        rows = sweep_cells(r0_max, rho_max, n, [tau])
    except FacetFlowError as e:
        return f"Error: {e}"
    counts = {}
    for row in rows:
        counts[row["case"]] = counts.get(row["case"], 0) + 1
    detached = [row for row in rows if row["detached"]]
    status_msg = f"Sweep complete over {len(rows)} cells (tau={tau}).\n"
    for case, count in sorted(counts.items()):
        status_msg += f"  - {case}: {count}\n"
    if detached:
        largest = max(row["rho"] + row["r0"] for row in detached)
        status_msg += f"Largest rho + r0 among detached cells: {largest:.6g} (threshold 2 tau = {2 * tau:.6g})\n"
    return status_msg


def run_scenario_tool(scenario_path: str, out_dir: str = "facetflow_out") -> str:
    """Runs a JSON scenario file inside the project directory and reports where the artifacts went."""
    for path in (scenario_path, out_dir):
        if not _is_path_safe(path):
            return f"Error: Path '{path}' is outside the allowed project directory."
    full_path = os.path.join(PROJECT_ROOT, scenario_path)
    if not os.path.isfile(full_path):
        return f"Error: Scenario not found at '{scenario_path}'."
    try:
        scenario = load_scenario(full_path)
    except FacetFlowError as e:
        return f"Error: {e}"
    code = run(scenario, os.path.join(PROJECT_ROOT, out_dir))
    report_path = os.path.join(PROJECT_ROOT, out_dir, "report.json")
    try:
        with open(report_path, "r") as f:
            report = json.load(f)
    except (OSError, ValueError) as e:
        return f"An unexpected error occurred while reading the report: {e}"
    status_msg = f"Scenario '{scenario_path}' ({scenario.mode}) finished with exit code {code}.\n"
    status_msg += f"Status: {report.get('status')}\n"
    if report.get("message"):
        status_msg += f"Message: {report['message']}\n"
    status_msg += f"Artifacts written to {out_dir}"
    return status_msg


if ADK_AVAILABLE:
    classify_facet_adk_tool = FunctionTool(classify_facet_tool)
    boundary_onset_adk_tool = FunctionTool(boundary_onset_tool)
    detachment_sweep_adk_tool = FunctionTool(detachment_sweep_tool)
    run_scenario_adk_tool = FunctionTool(run_scenario_tool)
