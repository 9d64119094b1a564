"""Exact facet dynamics for monotone data on the interval, the disc and the annulus.

Facet heights are integrated with the implicit midpoint rule.  Edge
positions follow from the bulk: in one dimension the bulk does not move, in
radial geometry it moves with u_t = chi / r, so an edge sits where
u0(r) + chi t / r meets the height of its facet.  The height rates are the
closed-form facet velocities of cahn_hoffman.
"""
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from scipy import optimize

from .cahn_hoffman import FacetReport, onset_report
from .errors import EnergyIncrease, InvalidInit, InvalidParam, StepTooLarge
from .geometry import EDGE_TOL, DomainSpec, make_domain
from .profiles import Profile, check_monotone
from .states_energy import State, energy_E, trace_gap

logger = logging.getLogger(__name__)

EVENT_KINDS = ("detachment_onset", "facet_created", "facet_collision")
ENERGY_TOL = 1e-9
GAP_TOL = 1e-12
RATE_CAP = 1e12
EXPANSION_LIMIT = 200
EDGE_SLACK = 1e-10
ONSET_SAMPLES = 4   # a gap sample and three growth steps after it
CSV_FORMAT = "%.17g"


@dataclass
class Trajectory:
    """Time series of states together with facet edges, heights, gaps and energies."""
    domain: DomainSpec
    tau: float
    times: List[float] = field(default_factory=list)
    states: List[State] = field(default_factory=list)
    facet_edges: List[Dict[str, float]] = field(default_factory=list)
    heights: List[Dict[str, float]] = field(default_factory=list)
    gap: List[np.ndarray] = field(default_factory=list)
    energy: List[float] = field(default_factory=list)
    events: List[Dict[str, Any]] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)
    diagnostics: Dict[str, List[Any]] = field(default_factory=dict)

    def append(self, t: float, state: State, edges: Optional[Dict[str, float]] = None,
               heights: Optional[Dict[str, float]] = None) -> None:
        if self.times and not t > self.times[-1]:
            raise InvalidParam(f"trajectory times must increase, got {t} after {self.times[-1]}")
        self.times.append(float(t))
        self.states.append(state)
        self.facet_edges.append(dict(edges or {}))
        self.heights.append(dict(heights or {}))
        self.gap.append(trace_gap(state, self.domain))
        self.energy.append(energy_E(state, self.domain))

    def add_event(self, t: float, kind: str, **info) -> None:
        if kind not in EVENT_KINDS:
            raise InvalidParam(f"unknown event kind '{kind}'")
        event = {"t": float(t), "kind": kind}
        event.update(info)
        self.events.append(event)
        logger.info("event %s at t=%.6g", kind, t)

    def record(self, name: str, value: Any) -> None:
        self.diagnostics.setdefault(name, []).append(value)

    @property
    def final_state(self) -> State:
        return self.states[-1]

    def _names(self, records: List[Dict[str, float]]) -> List[str]:
        names: List[str] = []
        for rec in records:
            for key in rec:
                if key not in names:
                    names.append(key)
        return names

    @property
    def edge_names(self) -> List[str]:
        return self._names(self.facet_edges)

    @property
    def height_names(self) -> List[str]:
        return self._names(self.heights)

    def series(self, name: str) -> np.ndarray:
        """A facet-edge or height column as an array (nan where missing)."""
        source = self.facet_edges if name in self.edge_names else self.heights
        return np.array([rec.get(name, math.nan) for rec in source], dtype=float)

    def max_gap(self) -> np.ndarray:
        return np.array([float(np.max(np.abs(g))) if g.size else 0.0 for g in self.gap])

    def header(self) -> List[str]:
        gaps = [f"gap_{side}" for side in self.domain.gamma]
        return ["t"] + self.edge_names + self.height_names + gaps + ["energy"]

    def rows(self):
        edges, heights = self.edge_names, self.height_names
        for k, t in enumerate(self.times):
            row = [t]
            row += [self.facet_edges[k].get(name, math.nan) for name in edges]
            row += [self.heights[k].get(name, math.nan) for name in heights]
            row += list(self.gap[k])
            row.append(self.energy[k])
            yield row

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(self.header())
            for row in self.rows():
                writer.writerow([CSV_FORMAT % value for value in row])

    def to_dict(self) -> Dict[str, Any]:
        return {"events": self.events, "metadata": self.metadata,
                "t_final": self.times[-1] if self.times else None,
                "energy_final": self.energy[-1] if self.energy else None}

    def to_json(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)


def _check_step(dt: float, T: float, tau: float) -> None:
    if not dt > 0:
        raise InvalidParam(f"dt must be positive, got {dt}")
    if not T > 0:
        raise InvalidParam(f"T must be positive, got {T}")
    if not tau > 0:
        raise InvalidParam(f"tau must be positive, got {tau}")


def _time_grid(dt: float, T: float) -> np.ndarray:
    steps = int(math.ceil(T / dt - 1e-9))
    return np.minimum(np.arange(steps + 1) * dt, T)


def _check_energy(traj: Trajectory) -> None:
    if len(traj.energy) < 2:
        return
    before, after = traj.energy[-2], traj.energy[-1]
    if after > before + ENERGY_TOL * max(1.0, before):
        raise EnergyIncrease(f"energy rose from {before:.17g} to {after:.17g} at t={traj.times[-1]:.6g}")


def solve_midpoint(h: float, rate: Callable[[float], float], dt: float) -> float:
    """h_new = h + dt * rate((h + h_new) / 2).

    The root is bracketed on the side the rate points to and found with
    brentq; rates need not be Lipschitz, only finite.
    """
    f0 = rate(h)
    if f0 == 0.0:
        return h
    direction = 1.0 if f0 > 0 else -1.0

    def residual(y: float) -> float:
        return (y - h) - 0.5 * dt * rate(y)

    span = 0.5 * dt * min(abs(f0), RATE_CAP)
    for _ in range(EXPANSION_LIMIT):
        far = h + direction * span
        if direction * residual(far) > 0:
            break
        span *= 2.0
    else:
        raise StepTooLarge(f"no midpoint bracket found from h={h} with dt={dt}")
    lo, hi = sorted((h, far))
    y = optimize.brentq(residual, lo, hi, xtol=1e-15 * max(1.0, abs(h)), rtol=4 * np.finfo(float).eps)
    return 2.0 * y - h


def bulk_edge(profile: Profile, chi: int, t: float, height: float, lo: float, hi: float,
              clamp: bool = False) -> float:
    """Radius in [lo, hi] where the moving radial bulk u0(r) + chi t / r equals height.

    [lo, hi] must lie in the bulk, between the previous edges.  A height out
    of reach raises StepTooLarge; with ``clamp`` the closer end is returned
    instead, which the rate evaluations inside the midpoint solve rely on.
    """
    def phi(r: float) -> float:
        return profile(r) + chi * t / r - height

    f_lo, f_hi = phi(lo), phi(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0:
        end, miss = (lo, f_lo) if abs(f_lo) < abs(f_hi) else (hi, f_hi)
        if clamp or abs(miss) <= EDGE_SLACK * max(1.0, abs(height)):
            return end
        raise StepTooLarge(f"height {height:.17g} has no bulk edge in [{lo:.17g}, {hi:.17g}] at t={t:.6g}")
    return float(optimize.bisect(phi, lo, hi, xtol=1e-14 * max(1.0, hi), maxiter=200))


def _bulk_monotone(profile: Profile, chi: int, t: float, lo: float, hi: float, nodes: np.ndarray) -> bool:
    """chi d/dr (u0 + chi t / r) > 0 on [lo, hi]."""
    if hi - lo <= EDGE_TOL * max(1.0, hi):
        return True
    points = np.concatenate(([lo], nodes[(nodes > lo) & (nodes < hi)], [hi]))
    slope = chi * np.asarray(profile.derivative(points)) - t / points ** 2
    return bool(np.all(slope > 0))


def _stationary(traj: Trajectory, state: State, times: np.ndarray, edges, heights) -> Trajectory:
    for t in times:
        traj.append(t, state, edges, heights)
    traj.metadata["stationary"] = True
    return traj


def evolve_1d(u0: Profile, L: float, tau: float = 1.0, dt: float = 1e-3, T: float = 0.2,
              n: int = 400) -> Trajectory:
    """Two boundary facets of a monotone profile on (0, L).

    The left facet [0, a] rises with chi / (tau + a), the right facet [b, L]
    falls with chi / (tau + L - b); in between u = u0.  The run stops when
    the facets collide.

    Raises:
        NonMonotone: if u0 is not monotone.
        StepTooLarge: if an implicit step cannot be bracketed.
    """
    _check_step(dt, T, tau)
    domain = make_domain("interval", L=L, n=n)
    chi = check_monotone(u0, domain)
    lo, hi = u0.bulk_interval(0.0, L)
    nodes = domain.nodes
    times = _time_grid(dt, T)
    traj = Trajectory(domain=domain, tau=tau, metadata={
        "tracker": "interval", "chi": chi, "edge_pairs": [["a", "b"]], "u0": u0.to_dict()})

    h_l, h_r = u0(lo), u0(hi)

    def state_at(left: float, right: float) -> State:
        u = np.clip(u0(nodes), min(left, right), max(left, right))
        return State(u, np.array([left, right]))

    if chi == 0:
        return _stationary(traj, state_at(h_l, h_r), times, {"a": 0.0, "b": 0.0}, {"h_l": h_l, "h_r": h_r})

    def left_rate(h: float) -> float:
        return chi / (tau + u0.inverse(h, lo, hi))

    def right_rate(h: float) -> float:
        return -chi / (tau + L - u0.inverse(h, lo, hi))

    traj.append(0.0, state_at(h_l, h_r), {"a": lo, "b": hi}, {"h_l": h_l, "h_r": h_r})
    traj.record("v_l", left_rate(h_l))
    traj.record("v_r", right_rate(h_r))
    for k in range(1, times.size):
        step = times[k] - times[k - 1]
        new_l = solve_midpoint(h_l, left_rate, step)
        new_r = solve_midpoint(h_r, right_rate, step)
        if chi * (new_r - new_l) <= 0:
            # linear interpolation of the height difference for T_cr
            s = (h_r - h_l) / ((h_r - h_l) - (new_r - new_l))
            t_cr = times[k - 1] + s * step
            h = h_l + s * (new_l - h_l)
            x = u0.inverse(h, lo, hi)
            traj.append(t_cr, state_at(h, h), {"a": x, "b": x}, {"h_l": h, "h_r": h})
            traj.record("v_l", 0.0)
            traj.record("v_r", 0.0)
            traj.add_event(t_cr, "facet_collision", a=x, b=x)
            traj.metadata["T_cr"] = t_cr
            _check_energy(traj)
            break
        h_l, h_r = new_l, new_r
        traj.append(times[k], state_at(h_l, h_r), {"a": u0.inverse(h_l, lo, hi), "b": u0.inverse(h_r, lo, hi)},
                    {"h_l": h_l, "h_r": h_r})
        traj.record("v_l", left_rate(h_l))
        traj.record("v_r", right_rate(h_r))
        _check_energy(traj)
    return traj


def ball_facet_velocity(R: float, rho: float, chi: int, tau: float) -> float:
    """Velocity of the boundary facet {rho <= |x| <= R}: -2 rho chi / (R^2 - rho^2 + 2 tau R)."""
    return -2.0 * rho * chi / (R * R - rho * rho + 2.0 * tau * R)


def evolve_ball(u0: Profile, R: float, rho0: float, tau: float = 1.0, dt: float = 1e-3, T: float = 0.2,
                n: int = 400, a0: Optional[float] = None) -> Trajectory:
    """Boundary facet {rho(t) <= |x| <= R} and central facet B(0, a(t)) of a radial profile.

    The initial state is u0 with the facet values u0(a0) on B(0, a0) and
    u0(rho0) on the outer ring.  The boundary value always equals the outer
    facet height.  The run stops at a collision of the two facets or when
    the bulk stops being monotone (a new facet would be created).

    Raises:
        InvalidInit: for rho0 outside (a0, R], a0 <= 0 or u0'(R) = 0 with rho0 = R.
    """
    _check_step(dt, T, tau)
    domain = make_domain("ball", R=R, n=n)
    chi = check_monotone(u0, domain)
    if chi == 0:
        raise InvalidInit("the ball tracker needs a strictly monotone bulk")
    a0 = u0.bulk_interval(0.0, R)[0] if a0 is None else a0
    if not a0 > 0:
        raise InvalidInit("u0 must be flat on a central disc of positive radius a0")
    if not a0 < rho0 <= R * (1.0 + EDGE_TOL):
        raise InvalidInit(f"need a0 < rho0 <= R, got a0={a0}, rho0={rho0}, R={R}")
    rho0 = min(rho0, R)
    at_boundary = abs(rho0 - R) <= EDGE_TOL * R
    if at_boundary and not chi * u0.derivative(R) > 0:
        raise InvalidInit("a facet starting at the boundary needs u0'(R) != 0")

    nodes = domain.nodes
    times = _time_grid(dt, T)
    traj = Trajectory(domain=domain, tau=tau, metadata={
        "tracker": "ball", "chi": chi, "edge_pairs": [["a", "rho"]], "u0": u0.to_dict()})

    def state_at(t: float, a: float, rho: float, h_c: float, h: float) -> State:
        bulk = u0(nodes) + chi * t / np.where(nodes > 0, nodes, 1.0)
        u = np.where(nodes <= a, h_c, np.where(nodes >= rho, h, bulk))
        return State(u, np.array([h]))

    a, rho = a0, rho0
    h_c, h = u0(a0), u0(rho0)
    traj.append(0.0, state_at(0.0, a, rho, h_c, h), {"a": a, "rho": rho}, {"h_c": h_c, "h": h})
    traj.record("facet_velocity", ball_facet_velocity(R, rho, chi, tau))
    traj.record("bulk_edge_velocity", chi / rho)
    traj.record("rhoprime", math.nan)
    traj.record("rho_rate", math.nan)
    if at_boundary:
        traj.add_event(0.0, "facet_created", side="outer")

    for k in range(1, times.size):
        t, step = times[k - 1], times[k] - times[k - 1]
        t_mid, t_new = t + 0.5 * step, times[k]

        h_c_new = solve_midpoint(h_c, lambda y: 2.0 * chi / bulk_edge(u0, chi, t_mid, y, a, rho, clamp=True), step)
        a_new = bulk_edge(u0, chi, t_new, h_c_new, a, rho)
        h_new = solve_midpoint(
            h, lambda y: ball_facet_velocity(R, bulk_edge(u0, chi, t_mid, y, a_new, rho, clamp=True), chi, tau), step)
        rho_new = bulk_edge(u0, chi, t_new, h_new, a_new, rho)

        lam = ball_facet_velocity(R, rho_new, chi, tau)
        denominator = u0.derivative(rho_new) - chi * t_new / rho_new ** 2
        traj.append(t_new, state_at(t_new, a_new, rho_new, h_c_new, h_new),
                    {"a": a_new, "rho": rho_new}, {"h_c": h_c_new, "h": h_new})
        traj.record("facet_velocity", lam)
        traj.record("bulk_edge_velocity", chi / rho_new)
        traj.record("rhoprime", (lam - chi / rho_new) / denominator if denominator != 0 else math.nan)
        traj.record("rho_rate", (rho_new - rho) / step)
        _check_energy(traj)
        a, rho, h_c, h = a_new, rho_new, h_c_new, h_new

        if rho - a <= EDGE_TOL * R:
            traj.add_event(t_new, "facet_collision", a=a, rho=rho)
            break
        if not _bulk_monotone(u0, chi, t_new, a, rho, nodes):
            traj.add_event(t_new, "facet_created", side="bulk")
            break
    return traj


def annulus_coherent_velocity(r0: float, rho: float, chi: int, tau: float) -> float:
    """2 rho chi / (rho^2 - r0^2 + 2 tau r0)."""
    return 2.0 * rho * chi / (rho * rho - r0 * r0 + 2.0 * tau * r0)


def annulus_detached_velocity(r0: float, rho: float, chi: int) -> float:
    """2 chi / (rho + r0)."""
    return 2.0 * chi / (rho + r0)


def neumann_facet_velocity(R: float, sigma: float, chi: int) -> float:
    """-2 chi sigma / (R^2 - sigma^2), capped near the forming edge."""
    denominator = max(R * R - sigma * sigma, R * R / RATE_CAP)
    return -2.0 * chi * sigma / denominator


def evolve_annulus(u0: Profile, r0: float, R: float, rho0: float, tau: float = 1.0, dt: float = 1e-3,
                   T: float = 0.2, n: int = 400, sigma0: Optional[float] = None) -> Trajectory:
    """Facet at the inner circle Gamma of A(r0, R), with or without a detached boundary layer.

    The regime is re-classified before every step: with a matched trace the
    facet is coherent while rho + r0 >= 2 tau and detaches otherwise; a
    detached layer moves with chi / tau until it meets the facet again.
    A Neumann facet [sigma(t), R] at the outer circle is tracked alongside.

    Raises:
        InvalidInit: for rho0 outside [r0, R) or a constant profile.
    """
    _check_step(dt, T, tau)
    if not 0 < r0 < R:
        raise InvalidInit(f"need 0 < r0 < R, got r0={r0}, R={R}")
    if rho0 < r0 - EDGE_TOL * max(1.0, r0) or rho0 >= R:
        raise InvalidInit(f"need r0 <= rho0 < R, got rho0={rho0} for r0={r0}, R={R}")
    rho0 = max(rho0, r0)
    domain = make_domain("annulus", r0=r0, R=R, gamma="inner", n=n)
    chi = check_monotone(u0, domain)
    if chi == 0:
        raise InvalidInit("the annulus tracker needs a strictly monotone bulk")
    sigma0 = u0.bulk_interval(r0, R)[1] if sigma0 is None else min(sigma0, R)
    if not rho0 < sigma0:
        raise InvalidInit(f"need rho0 < sigma0, got rho0={rho0}, sigma0={sigma0}")

    nodes = domain.nodes
    times = _time_grid(dt, T)
    traj = Trajectory(domain=domain, tau=tau, metadata={
        "tracker": "annulus", "chi": chi, "edge_pairs": [["rho", "sigma"]], "u0": u0.to_dict(),
        "regime_switching": "re-evaluated every step", "regime_transitions": []})

    def state_at(t: float, rho: float, sigma: float, h: float, h_o: float, v: float) -> State:
        bulk = u0(nodes) + chi * t / nodes
        u = np.where(nodes <= rho, h, np.where(nodes >= sigma, h_o, bulk))
        return State(u, np.array([v]))

    onset = abs(rho0 - r0) <= EDGE_TOL * max(1.0, r0)
    rho, sigma = rho0, sigma0
    h, h_o = u0(rho0), u0(sigma0)
    v = h
    traj.append(0.0, state_at(0.0, rho, sigma, h, h_o, v), {"rho": rho, "sigma": sigma}, {"h": h, "h_o": h_o})
    if onset:
        report = onset_report(domain, chi, tau, "inner")
        traj.metadata["onset"] = report.case
        if report.case == "onset_facet_forms":
            traj.add_event(0.0, "facet_created", side="inner")
    if sigma0 >= R:
        traj.add_event(0.0, "facet_created", side="outer")

    regime = None
    for k in range(1, times.size):
        t, step = times[k - 1], times[k] - times[k - 1]
        t_mid, t_new = t + 0.5 * step, times[k]
        gap = v - h
        scale = max(1.0, abs(h))
        if abs(gap) > GAP_TOL * scale:
            new_regime = "detached"
        elif rho + r0 >= 2.0 * tau * (1.0 - 1e-12):
            new_regime = "coherent"
        else:
            new_regime = "detached"
        if new_regime != regime:
            traj.metadata["regime_transitions"].append({"t": t, "from": regime, "to": new_regime})
            if new_regime == "detached" and abs(gap) <= GAP_TOL * scale:
                traj.add_event(t, "detachment_onset", rho=rho)
            logger.info("annulus regime %s -> %s at t=%.6g (rho=%.6g)", regime, new_regime, t, rho)
            regime = new_regime

        h_o_new = solve_midpoint(
            h_o, lambda y: neumann_facet_velocity(R, bulk_edge(u0, chi, t_mid, y, rho, sigma, clamp=True), chi), step)
        sigma_new = bulk_edge(u0, chi, t_new, h_o_new, rho, sigma)
        if regime == "coherent":
            def rate(y: float) -> float:
                return annulus_coherent_velocity(r0, bulk_edge(u0, chi, t_mid, y, rho, sigma_new, clamp=True), chi, tau)
        else:
            def rate(y: float) -> float:
                return annulus_detached_velocity(r0, bulk_edge(u0, chi, t_mid, y, rho, sigma_new, clamp=True), chi)
        h_new = solve_midpoint(h, rate, step)
        rho_new = bulk_edge(u0, chi, t_new, h_new, rho, sigma_new)
        if regime == "coherent":
            v_new = h_new
        else:
            v_new = v + step * chi / tau
            new_gap = v_new - h_new
            if gap != 0.0 and gap * new_gap <= 0:
                v_new = h_new
                traj.metadata["regime_transitions"].append({"t": t_new, "from": "detached", "to": "reattached"})
                logger.info("boundary layer reattached at t=%.6g (rho=%.6g)", t_new, rho_new)

        traj.append(t_new, state_at(t_new, rho_new, sigma_new, h_new, h_o_new, v_new),
                    {"rho": rho_new, "sigma": sigma_new}, {"h": h_new, "h_o": h_o_new})
        lam = (annulus_coherent_velocity(r0, rho_new, chi, tau) if regime == "coherent"
               else annulus_detached_velocity(r0, rho_new, chi))
        traj.record("lambda", lam)
        traj.record("regime", regime)
        traj.record("gap_rate", ((v_new - h_new) - gap) / step)
        traj.record("predicted_gap_rate", 0.0 if regime == "coherent" else chi / tau - lam)
        _check_energy(traj)
        rho, sigma, h, h_o, v = rho_new, sigma_new, h_new, h_o_new, v_new

        if sigma - rho <= EDGE_TOL * R:
            traj.add_event(t_new, "facet_collision", rho=rho, sigma=sigma)
            break
        if not _bulk_monotone(u0, chi, t_new, rho, sigma, nodes):
            traj.add_event(t_new, "facet_created", side="bulk")
            break
    return traj


def boundary_onset(domain: DomainSpec, chi: int, tau: float = 1.0, side: Optional[str] = None) -> FacetReport:
    """Facet formation, neutrality or detachment at Gamma when no facet touches it."""
    return onset_report(domain, chi, tau, side)


def detect_events(traj: Trajectory, tol: float = 1e-9) -> List[Dict[str, Any]]:
    """Events read off a trajectory's series.

    detachment_onset: the first time max |v - gamma u| exceeds tol inside a
    window of four samples over which it strictly grows.  The window starts
    at that time, or ends at the last sample when the run is over sooner; a
    run of two or three samples must grow throughout and a single sample
    reports none.  facet_collision: the first time two facet edges listed in
    metadata['edge_pairs'] are within one grid cell.
    """
    if not traj.times:
        raise InvalidParam("empty trajectory")
    events: List[Dict[str, Any]] = []
    gaps = traj.max_gap()
    if gaps.size == 1:
        logger.debug("single-sample trajectory: no detachment check")
    for k in np.flatnonzero(gaps > tol):
        start = max(0, min(int(k), gaps.size - ONSET_SAMPLES))
        window = gaps[start:start + ONSET_SAMPLES]
        if window.size > 1 and np.all(np.diff(window) > 0):
            events.append({"t": traj.times[k], "kind": "detachment_onset", "gap": float(gaps[k])})
            break

    h = traj.domain.h
    for left, right in traj.metadata.get("edge_pairs", []):
        if left not in traj.edge_names or right not in traj.edge_names:
            continue
        distance = traj.series(right) - traj.series(left)
        hits = np.flatnonzero(distance <= h)
        if hits.size:
            k = int(hits[0])
            events.append({"t": traj.times[k], "kind": "facet_collision", left: float(traj.series(left)[k]),
                           right: float(traj.series(right)[k])})
    return events


__all__ = [
    "Trajectory", "evolve_1d", "evolve_ball", "evolve_annulus", "boundary_onset", "detect_events",
    "solve_midpoint", "bulk_edge", "ball_facet_velocity", "annulus_coherent_velocity",
    "annulus_detached_velocity", "neumann_facet_velocity",
]
