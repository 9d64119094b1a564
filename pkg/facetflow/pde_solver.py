"""Minimizing-movement solver for the total variation flow with a dynamic boundary layer.

Every implicit Euler step

    minimize  1/2 |u - u^n|^2 + tau/2 |v - v^n|^2_Gamma + dt E(u, v)

is weighted TV denoising on a path graph: the grid nodes in order, with
each Gamma value v attached next to its trace node.  Edges carry the
measures of the TV term and of the boundary mismatch |gamma u - v|, node
masses the L2 measures (tau-weighted on Gamma).  The step is solved through
its dual, a box QP with a tridiagonal Hessian, or with an accelerated
primal-dual iteration.
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .box_qp import STALL_FACTOR, solve_box_qp
from .canonical_section import GRAD_TOL, detect_facets
from .errors import ConfigError, EnergyIncrease, GridMismatch, InvalidParam, NonMonotone, NotConverged
from .facet_dynamics import Trajectory
from .geometry import DomainSpec, scale_domain
from .states_energy import (
    FlowConfig,
    State,
    check_state,
    difference,
    energy_E,
    energy_E_eps,
    is_ordered,
    norm_tau,
)

logger = logging.getLogger(__name__)

ENERGY_SLACK = 1e-12
PDHG_CHECK_EVERY = 50
PDHG_ITER_FACTOR = 100
NEWTON_MAX_BACKTRACK = 60
ORDER_TOL = 1e-8


@dataclass
class StepResult:
    state: State
    dual: Optional[np.ndarray]
    iterations: int
    residual: float
    gap: float


class PathGraph:
    """The weighted path graph [v_inner] - u_0 - ... - u_{n-1} - [v_outer] of a domain."""

    def __init__(self, domain: DomainSpec, tau: float):
        if not tau > 0:
            raise InvalidParam(f"tau must be positive, got {tau}")
        self.domain = domain
        self.tau = tau
        weights = dict(zip(domain.gamma, domain.gamma_weights))
        self.lead = "inner" in weights
        self.tail = "outer" in weights
        masses = [domain.node_masses]
        edges = [domain.edge_weights]
        if self.lead:
            masses.insert(0, [tau * weights["inner"]])
            edges.insert(0, [weights["inner"]])
        if self.tail:
            masses.append([tau * weights["outer"]])
            edges.append([weights["outer"]])
        self.masses = np.concatenate(masses).astype(float)
        self.edge_weights = np.concatenate(edges).astype(float)
        m = self.masses.size
        self.D = sparse.diags([-np.ones(m - 1), np.ones(m - 1)], [0, 1], shape=(m - 1, m), format="csr")
        self.H = (self.D @ sparse.diags(1.0 / self.masses) @ self.D.T).tocsr()

    @property
    def size(self) -> int:
        return self.masses.size

    def pack(self, state: State) -> np.ndarray:
        v = dict(zip(self.domain.gamma, state.v))
        parts = [state.u]
        if self.lead:
            parts.insert(0, [v["inner"]])
        if self.tail:
            parts.append([v["outer"]])
        return np.concatenate(parts).astype(float)

    def unpack(self, x: np.ndarray) -> State:
        start = 1 if self.lead else 0
        u = x[start:start + self.domain.n]
        v = {}
        if self.lead:
            v["inner"] = x[0]
        if self.tail:
            v["outer"] = x[-1]
        return State(u.copy(), np.array([v[side] for side in self.domain.gamma]))

    def primal(self, x: np.ndarray, f: np.ndarray, dt: float) -> float:
        return 0.5 * float(np.sum(self.masses * (x - f) ** 2)) + dt * float(np.sum(self.edge_weights * np.abs(self.D @ x)))

    def dual_value(self, p: np.ndarray, f: np.ndarray) -> float:
        return float(p @ (self.D @ f)) - 0.5 * float(p @ (self.H @ p))

    def from_dual(self, p: np.ndarray, f: np.ndarray) -> np.ndarray:
        return f - (self.D.T @ p) / self.masses


def _check_config(config: FlowConfig) -> None:
    if not config.dt > 0:
        raise ConfigError(f"dt must be positive, got {config.dt}")


def _step_active_set(graph: PathGraph, f: np.ndarray, config: FlowConfig, dt: float,
                     warm: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray, int, float]:
    bound = dt * graph.edge_weights
    result = solve_box_qp(graph.H, -(graph.D @ f), -bound, bound, x0=warm, tol=config.tol,
                          max_iter=config.max_iter)
    return graph.from_dual(result.x, f), result.x, result.iterations, result.residual


def _operator_norm_sq(graph: PathGraph) -> float:
    """Gershgorin bound on |D M^-1/2|^2 = |H|."""
    return float(np.max(np.asarray(abs(graph.H).sum(axis=1)).ravel()))


def _step_pdhg(graph: PathGraph, f: np.ndarray, config: FlowConfig, dt: float,
               warm: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray, int, float]:
    """Accelerated primal-dual iteration in xi = sqrt(M) x, where the data term is 1-strongly convex."""
    root = np.sqrt(graph.masses)
    K = graph.D @ sparse.diags(1.0 / root)
    bound = dt * graph.edge_weights
    target = root * f
    L = math.sqrt(_operator_norm_sq(graph))
    step_x = step_p = 1.0 / L

    p = np.clip(warm, -bound, bound) if warm is not None and warm.shape == bound.shape else np.zeros_like(bound)
    xi = target - K.T @ p
    xi_bar = xi.copy()
    gap = math.inf
    iterations = 0
    for iterations in range(1, PDHG_ITER_FACTOR * config.max_iter + 1):
        p = np.clip(p + step_p * (K @ xi_bar), -bound, bound)
        xi_new = (xi - step_x * (K.T @ p) + step_x * target) / (1.0 + step_x)
        theta = 1.0 / math.sqrt(1.0 + 2.0 * step_x)
        step_x *= theta
        step_p /= theta
        xi_bar = xi_new + theta * (xi_new - xi)
        xi = xi_new
        if iterations % PDHG_CHECK_EVERY == 0:
            gap = graph.primal(xi / root, f, dt) - graph.dual_value(p, f)
            if gap <= config.tol * max(1.0, abs(graph.primal(xi / root, f, dt))):
                break
    else:
        raise NotConverged(f"primal-dual iteration stopped with duality gap {gap:.3e}")
    return xi / root, p, iterations, gap


def _step_regularized(state: State, config: FlowConfig, domain: DomainSpec, dt: float) -> Tuple[State, int, float]:
    """Newton's method for the step with E_eps and the trace tied to u."""
    eps = config.eps
    h = domain.h
    cells = domain.edge_weights * h
    masses = domain.node_masses.copy()
    shift = np.zeros(domain.n)
    for node, weight, v in zip(domain.gamma_nodes, domain.gamma_weights, state.v):
        masses[node] += config.tau * weight
        shift[node] += config.tau * weight * v
    rhs = domain.node_masses * state.u + shift
    D = sparse.diags([-np.ones(domain.n - 1), np.ones(domain.n - 1)], [0, 1],
                     shape=(domain.n - 1, domain.n), format="csr") / h

    def objective(u: np.ndarray) -> float:
        g = D @ u
        smooth = np.sum(cells * (np.sqrt(g * g + eps * eps) + 0.5 * eps * eps * g * g))
        return 0.5 * float(u @ (masses * u)) - float(rhs @ u) + dt * float(smooth)

    u = state.u.copy()
    value = objective(u)
    residual = math.inf
    for iteration in range(1, config.max_iter + 1):
        g = D @ u
        root = np.sqrt(g * g + eps * eps)
        first = cells * (g / root + eps * eps * g)
        second = cells * (eps * eps / root ** 3 + eps * eps)
        grad = masses * u - rhs + dt * (D.T @ first)
        residual = float(np.max(np.abs(grad)))
        if residual <= config.tol:
            break
        hess = sparse.diags(masses) + dt * (D.T @ sparse.diags(second) @ D)
        search = -splinalg.spsolve(hess.tocsc(), grad)
        slope = float(grad @ search)
        if not slope < 0:
            raise NotConverged(f"Newton step for E_eps is not a descent direction (slope {slope:.3e})")
        step = 1.0
        for _ in range(NEWTON_MAX_BACKTRACK):
            candidate = u + step * search
            cand_value = objective(candidate)
            if cand_value <= value + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            # stalled at roundoff: keep u
            if residual <= STALL_FACTOR * config.tol:
                break
            raise NotConverged(f"Newton step for E_eps found no decrease (residual {residual:.3e})")
        u, value = candidate, cand_value
    else:
        raise NotConverged(f"Newton step for E_eps stopped with residual {residual:.3e}")
    return State(u, u[domain.gamma_nodes].copy()), iteration, residual


def _step(state: State, config: FlowConfig, domain: DomainSpec, graph: Optional[PathGraph] = None,
          warm: Optional[np.ndarray] = None, dt: Optional[float] = None) -> StepResult:
    config = config.resolve(domain)
    _check_config(config)
    check_state(state, domain)
    dt = config.dt if dt is None else dt
    if config.eps > 0:
        new, iterations, residual = _step_regularized(state, config, domain, dt)
        return StepResult(new, None, iterations, residual, 0.0)
    graph = graph or PathGraph(domain, config.tau)
    f = graph.pack(state)
    if config.solver == "pdhg":
        x, p, iterations, residual = _step_pdhg(graph, f, config, dt, warm)
    else:
        x, p, iterations, residual = _step_active_set(graph, f, config, dt, warm)
    gap = max(graph.primal(x, f, dt) - graph.dual_value(p, f), 0.0)
    return StepResult(graph.unpack(x), p, iterations, residual, gap)


def step_implicit(state_n: State, config: FlowConfig, domain: DomainSpec) -> State:
    """One implicit Euler step of the flow in the tau-weighted metric.

    Raises:
        ConfigError: for dt <= 0.
        NotConverged: if the inner solver runs out of iterations.
    """
    return _step(state_n, config, domain).state


def _energy(state: State, config: FlowConfig, domain: DomainSpec) -> float:
    if config.eps > 0:
        return energy_E_eps(state, config.eps, domain)
    return energy_E(state, domain)


def extract_edges(state: State, domain: DomainSpec, grad_tol: float = GRAD_TOL) -> Tuple[float, float]:
    """Inner edge of the facet at the outer end and outer edge of the facet at the inner end.

    A missing facet gives the grid end itself.
    """
    facets = detect_facets(state, domain, grad_tol)
    left, right = domain.inner, domain.outer
    for facet in facets:
        if facet.inner <= domain.inner:
            left = facet.outer
        if facet.outer >= domain.outer:
            right = facet.inner
    return left, right


def run_flow(initial_state: State, config: FlowConfig, domain: DomainSpec) -> Trajectory:
    """Iterate step_implicit up to config.T and record energies, dissipation and solver diagnostics.

    Raises:
        EnergyIncrease: if config.check_energy and the energy rises by more
            than the solver's duality gap allows.
    """
    config = config.resolve(domain)
    _check_config(config)
    check_state(initial_state, domain)
    graph = PathGraph(domain, config.tau) if config.eps == 0 else None
    traj = Trajectory(domain=domain, tau=config.tau, metadata={"solver": config.solver, "config": config.to_dict(),
                                                               "edge_pairs": [["inner_edge", "outer_edge"]]})

    def record(t: float, state: State) -> None:
        try:
            left, right = extract_edges(state, domain)
        except NonMonotone:
            left = right = math.nan
        traj.append(t, state, {"inner_edge": left, "outer_edge": right},
                    {"inner_height": float(state.u[0]), "outer_height": float(state.u[-1])})

    state = initial_state
    record(0.0, state)
    energy = _energy(state, config, domain)
    warm = None
    t = 0.0
    for k in range(1, config.steps + 1):
        t_new = min(k * config.dt, config.T)
        dt = t_new - t
        result = _step(state, config, domain, graph, warm, dt)
        new_energy = _energy(result.state, config, domain)
        change = difference(result.state, state)
        dissipation = norm_tau(change, config.tau, domain) ** 2 / dt
        drop = energy - new_energy if math.isfinite(energy) else math.nan

        traj.record("iterations", result.iterations)
        traj.record("residual", result.residual)
        traj.record("duality_gap", result.gap)
        traj.record("energy_drop", drop)
        traj.record("dissipation", dissipation)
        logger.debug("step %d: t=%.6g E=%.12g iterations=%d gap=%.3e", k, t_new, new_energy,
                     result.iterations, result.gap)
        if config.check_energy and math.isfinite(energy):
            slack = result.gap / dt + ENERGY_SLACK * (1.0 + abs(energy))
            if new_energy > energy + slack:
                raise EnergyIncrease(
                    f"energy rose from {energy:.17g} to {new_energy:.17g} at t={t_new:.6g}")

        state, energy, warm, t = result.state, new_energy, result.dual, t_new
        record(t, state)
    logger.info("flow finished: %d steps, E(T)=%.12g", config.steps, energy)
    return traj


def check_order_preserving(stateA0: State, stateB0: State, config: FlowConfig, domain: DomainSpec) -> bool:
    """Whether A(t) <= B(t) at every output time when A(0) <= B(0)."""
    if not is_ordered(stateA0, stateB0):
        raise InvalidParam("initial states are not ordered")
    tol = ORDER_TOL + config.tol
    trajA = run_flow(stateA0, config, domain)
    trajB = run_flow(stateB0, config, domain)
    for t, A, B in zip(trajA.times, trajA.states, trajB.states):
        if not is_ordered(A, B, tol):
            logger.warning("ordering lost at t=%.6g", t)
            return False
    return True


def random_ordered_pair(domain: DomainSpec, rng: np.random.Generator) -> Tuple[State, State]:
    """Two monotone states A <= B; the boundary values are perturbed off the traces."""
    base = np.sort(rng.uniform(-1.0, 1.0, domain.n))
    lift = rng.uniform(0.0, 0.5) + np.sort(rng.uniform(0.0, 0.5, domain.n))
    if rng.random() < 0.5:
        base, lift = base[::-1], lift[::-1]
    nodes = domain.gamma_nodes
    v_a = base[nodes] + rng.uniform(-0.2, 0.2, nodes.size)
    v_b = v_a + lift[nodes] + rng.uniform(0.0, 0.2, nodes.size)
    return State(base.copy(), v_a), State(base + lift, v_b)


def check_contraction(stateA0: State, stateB0: State, config: FlowConfig, domain: DomainSpec) -> bool:
    """Whether |A(t) - B(t)|_tau never increases."""
    tol = ORDER_TOL + config.tol
    trajA = run_flow(stateA0, config, domain)
    trajB = run_flow(stateB0, config, domain)
    distances = [norm_tau(difference(A, B), config.tau, domain) for A, B in zip(trajA.states, trajB.states)]
    increases = np.diff(distances)
    if np.any(increases > tol):
        logger.warning("distance grew by %.3e", float(np.max(increases)))
        return False
    return True


def _same_grid(a: DomainSpec, b: DomainSpec) -> bool:
    return (a.kind == b.kind and a.n == b.n and a.gamma == b.gamma
            and math.isclose(a.inner, b.inner, abs_tol=1e-12) and math.isclose(a.outer, b.outer, abs_tol=1e-12))


def _interpolate_state(traj: Trajectory, t: float) -> State:
    times = np.asarray(traj.times)
    k = int(np.searchsorted(times, t))
    if k < times.size and math.isclose(times[k], t, abs_tol=1e-12):
        return traj.states[k]
    if k == 0:
        return traj.states[0]
    s = (t - times[k - 1]) / (times[k] - times[k - 1])
    A, B = traj.states[k - 1], traj.states[k]
    return State((1 - s) * A.u + s * B.u, (1 - s) * A.v + s * B.v)


def _interpolate_series(traj: Trajectory, name: str, t: float) -> float:
    return float(np.interp(t, traj.times, traj.series(name)))


def compare_exact(pde_trajectory: Trajectory, exact_trajectory: Trajectory) -> Dict[str, Any]:
    """Errors of a PDE run against an exact tracker on the same grid.

    The exact trajectory is interpolated linearly in time onto the PDE
    times it covers.  Facet edges of the PDE states are extracted as flat
    runs of the grid.

    Raises:
        GridMismatch: for different grids, Gamma or tau.
    """
    pde, exact = pde_trajectory, exact_trajectory
    if not _same_grid(pde.domain, exact.domain):
        raise GridMismatch(f"grids differ: {pde.domain.to_dict()} vs {exact.domain.to_dict()}")
    if not math.isclose(pde.tau, exact.tau, rel_tol=1e-12):
        raise GridMismatch(f"tau differs: {pde.tau} vs {exact.tau}")
    if not pde.times or not exact.times:
        raise GridMismatch("empty trajectory")

    domain = pde.domain
    edge_names = exact.edge_names[:2]
    height_names = exact.height_names[:2]
    t_end = exact.times[-1] + 1e-12
    report: Dict[str, Any] = {"times": [], "Linf": [], "L2": [], "gap_err": [],
                              "edges": {name: [] for name in edge_names},
                              "heights": {name: [] for name in height_names},
                              "edge_err": {name: [] for name in edge_names}}
    for t, state, edges in zip(pde.times, pde.states, pde.facet_edges):
        if t > t_end:
            break
        reference = _interpolate_state(exact, t)
        diff = state.u - reference.u
        report["times"].append(t)
        report["Linf"].append(float(np.max(np.abs(diff))))
        report["L2"].append(math.sqrt(float(np.sum(domain.node_masses * diff * diff))))
        gap_err = (state.v - state.u[domain.gamma_nodes]) - (reference.v - reference.u[domain.gamma_nodes])
        report["gap_err"].append(float(np.max(np.abs(gap_err))) if gap_err.size else 0.0)
        if "inner_edge" in edges:
            extracted = (edges["inner_edge"], edges["outer_edge"])
        else:
            extracted = extract_edges(state, domain)
        for name, value in zip(edge_names, extracted):
            report["edges"][name].append(value)
            report["edge_err"][name].append(abs(value - _interpolate_series(exact, name, t)))
        for name, value in zip(height_names, (float(state.u[0]), float(state.u[-1]))):
            report["heights"][name].append(value)

    report["max_Linf"] = max(report["Linf"])
    report["max_L2"] = max(report["L2"])
    report["max_gap_err"] = max(report["gap_err"])
    report["max_edge_err"] = {name: max(errs) for name, errs in report["edge_err"].items()}
    report["final"] = {"t": report["times"][-1], "Linf": report["Linf"][-1], "L2": report["L2"][-1],
                       "edge_err": {name: errs[-1] for name, errs in report["edge_err"].items()}}
    return report


def scale_state(state: State, domain: DomainSpec, s: float) -> Tuple[State, DomainSpec]:
    """(s u(./s), s v) on the dilated domain s Omega."""
    if not s > 0:
        raise InvalidParam(f"scale factor must be positive, got {s}")
    check_state(state, domain)
    return state.scaled(s), scale_domain(domain, s)


def scale_config(config: FlowConfig, s: float) -> FlowConfig:
    """The config under which a flow on s Omega reproduces the scaled flow: tau * s, times * s^2."""
    if not s > 0:
        raise InvalidParam(f"scale factor must be positive, got {s}")
    dt = None if config.dt is None else config.dt * s * s
    return FlowConfig(tau=config.tau * s, eps=config.eps, dt=dt, T=config.T * s * s,
                      tol=config.tol, max_iter=config.max_iter, solver=config.solver,
                      check_energy=config.check_energy)


def velocity_estimates(traj: Trajectory, k: int = 1) -> Dict[str, float]:
    """Difference quotients of the boundary heights and traces over the first k steps."""
    if len(traj.times) <= k:
        raise InvalidParam(f"trajectory has fewer than {k + 1} states")
    dt = traj.times[k] - traj.times[0]
    A, B = traj.states[0], traj.states[k]
    out = {"inner_height": (B.u[0] - A.u[0]) / dt, "outer_height": (B.u[-1] - A.u[-1]) / dt}
    for side, va, vb in zip(traj.domain.gamma, A.v, B.v):
        out[f"v_{side}"] = (vb - va) / dt
    return out


def energy_rate(traj: Trajectory, k: int = 1) -> float:
    """(E(t_k) - E(t_{k-1})) / dt."""
    if len(traj.times) <= k:
        raise InvalidParam(f"trajectory has fewer than {k + 1} states")
    return (traj.energy[k] - traj.energy[k - 1]) / (traj.times[k] - traj.times[k - 1])


def solver_diagnostics(traj: Trajectory) -> Dict[str, Any]:
    out: Dict[str, Any] = {"steps": max(len(traj.times) - 1, 0)}
    for name in ("iterations", "residual", "duality_gap", "energy_drop", "dissipation"):
        values = traj.diagnostics.get(name, [])
        out[name] = values
    if traj.diagnostics.get("iterations"):
        out["max_iterations"] = int(max(traj.diagnostics["iterations"]))
        out["max_residual"] = float(max(traj.diagnostics["residual"]))
    drops = [d for d in traj.diagnostics.get("energy_drop", []) if not math.isnan(d)]
    excess = [d - q for d, q in zip(traj.diagnostics.get("energy_drop", []), traj.diagnostics.get("dissipation", []))
              if not math.isnan(d)]
    out["energy_violations"] = int(sum(1 for d in drops if d < -ENERGY_SLACK * (1.0 + abs(d))))
    out["min_dissipation_excess"] = float(min(excess)) if excess else None
    return out


__all__ = [
    "PathGraph", "StepResult", "step_implicit", "run_flow", "check_order_preserving", "check_contraction",
    "compare_exact", "extract_edges", "scale_state", "scale_config", "velocity_estimates", "energy_rate",
    "solver_diagnostics", "random_ordered_pair",
]
