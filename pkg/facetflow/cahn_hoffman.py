"""Cahn-Hoffman fields on facets, the I_tau functional and the facet classifier.

A radially symmetric field is z = w(r) x/r, so everything reduces to the
scalar profile w.  With div z = lam constant on a facet, w = lam r/2 + c/r in
two dimensions and w = lam x + c in one; the two free constants are fixed by
the traces at the facet ends:

    interior end      w = chi            (z continues the bulk field)
    Neumann end       w = 0
    centre of a disc  c = 0
    Gamma end         [z.nu] = mu, i.e. w = nu mu with nu = -1 at an inner circle

lam and mu are signed: lam is the facet's vertical velocity, mu the flux
through Gamma along the outer normal of Omega.  A facet is coherent when
tau lam + mu = 0; its boundary value then moves together with the facet.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import Degenerate, DomainMismatch, InvalidFacet, InvalidParam
from .geometry import (
    EDGE_TOL,
    MIN_NODES,
    DomainSpec,
    FacetEdge,
    FacetSpec,
    check_facet,
    curvature_at,
    facet_edges,
    facet_gamma_sides,
    make_domain,
    scale_domain,
)

logger = logging.getLogger(__name__)

BOX_TOL = 1e-9
FEAS_TOL = 1e-12
BORDERLINE_TOL = 1e-12
COHERENCE_TOL = 1e-12

CASE_TAGS = (
    "ball_coherent",
    "annulus_coherent",
    "annulus_borderline",
    "annulus_detached",
    "interval_coherent",
    "ball_detached",
    "interval_detached",
    "onset_facet_forms",
    "onset_neutral",
    "onset_detach",
    "interior",
)


@dataclass(frozen=True)
class RadialField:
    """The profile w of z = w(r) x/r on [r_in, r_out] (z = w(x) when dim == 1).

    Either closed form, with coefficients (A, c) so that div z = A, or
    sampled at increasing nodes.  Between two samples r w is affine in r^2
    (affine in x in one dimension), i.e. div z is constant on every cell.
    """
    dim: int
    r_in: float
    r_out: float
    A: Optional[float] = None
    c: Optional[float] = None
    nodes: Optional[np.ndarray] = None
    samples: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InvalidParam(f"field dimension must be 1 or 2, got {self.dim}")
        if self.closed:
            if self.nodes is not None or self.samples is not None:
                raise InvalidParam("a field is either closed form or sampled, not both")
            return
        if self.nodes is None or self.samples is None:
            raise InvalidParam("a field needs (A, c) or (nodes, samples)")
        nodes = np.asarray(self.nodes, dtype=float)
        samples = np.asarray(self.samples, dtype=float)
        if nodes.shape != samples.shape or nodes.size < 2 or np.any(np.diff(nodes) <= 0):
            raise InvalidParam("sampled field needs matching, strictly increasing nodes")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "samples", samples)

    @property
    def closed(self) -> bool:
        return self.A is not None and self.c is not None

    def w(self, r):
        r = np.asarray(r, dtype=float)
        if self.closed:
            if self.dim == 1:
                out = self.A * r + self.c
            else:
                out = 0.5 * self.A * r
                if self.c != 0.0:
                    out = out + self.c / r
        elif self.dim == 1:
            out = np.interp(r, self.nodes, self.samples)
        else:
            rw = np.interp(r * r, self.nodes ** 2, self.nodes * self.samples)
            out = np.divide(rw, r, out=np.zeros_like(rw), where=r > 0)
        return float(out) if np.ndim(out) == 0 else out

    def cell_measures(self) -> np.ndarray:
        if self.dim == 1:
            return np.diff(self.nodes)
        return math.pi * np.diff(self.nodes ** 2)

    def cell_divergence(self) -> np.ndarray:
        """div z on each sampling cell."""
        if self.closed:
            raise InvalidParam("closed-form fields have a single divergence A")
        if self.dim == 1:
            return np.diff(self.samples) / np.diff(self.nodes)
        return 2.0 * np.diff(self.nodes * self.samples) / np.diff(self.nodes ** 2)

    def sampled(self, nodes: Sequence[float]) -> "RadialField":
        nodes = np.asarray(nodes, dtype=float)
        return RadialField(dim=self.dim, r_in=float(nodes[0]), r_out=float(nodes[-1]),
                           nodes=nodes, samples=np.asarray(self.w(nodes), dtype=float))

    def scaled(self, s: float) -> "RadialField":
        """z^s(y) = z(y / s) on the dilated interval."""
        if self.closed:
            c = self.c if self.dim == 1 else self.c * s
            return RadialField(dim=self.dim, r_in=self.r_in * s, r_out=self.r_out * s, A=self.A / s, c=c)
        return RadialField(dim=self.dim, r_in=self.r_in * s, r_out=self.r_out * s,
                           nodes=self.nodes * s, samples=self.samples.copy())

    def negated(self) -> "RadialField":
        if self.closed:
            return RadialField(dim=self.dim, r_in=self.r_in, r_out=self.r_out, A=-self.A, c=-self.c)
        return RadialField(dim=self.dim, r_in=self.r_in, r_out=self.r_out,
                           nodes=self.nodes, samples=-self.samples)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"dim": self.dim, "r_in": self.r_in, "r_out": self.r_out}
        if self.closed:
            out.update({"representation": "closed", "A": self.A, "c": self.c})
        else:
            out.update({"representation": "sampled", "nodes": self.nodes.tolist(),
                        "samples": self.samples.tolist()})
        return out


@dataclass
class CahnHoffmanSolution:
    field: RadialField
    lam: float
    mu: float
    feasible: bool = True


@dataclass
class FacetReport:
    lam: float
    mu: float
    calibrable: bool
    coherent: bool
    detached: bool
    case: str
    tau: float
    witness: Optional[RadialField] = None
    v_t: Optional[float] = None
    bulk_speed: Optional[float] = None
    gap_rate: Optional[float] = None
    curvature: Optional[float] = None
    curvature_predicts_coherent: Optional[bool] = None
    velocity_lower_bound: Optional[float] = None
    violations: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lambda": self.lam,
            "mu": self.mu,
            "calibrable": self.calibrable,
            "coherent": self.coherent,
            "detached": self.detached,
            "case": self.case,
            "tau": self.tau,
            "witness": self.witness.to_dict() if self.witness is not None else None,
            "v_t": self.v_t,
            "bulk_speed": self.bulk_speed,
            "gap_rate": self.gap_rate,
            "curvature": self.curvature,
            "curvature_predicts_coherent": self.curvature_predicts_coherent,
            "velocity_lower_bound": self.velocity_lower_bound,
            "violations": self.violations,
        }


def quad_min(a: float, b: float, c: float, tau: float) -> Tuple[float, float]:
    """Minimize a lam^2 + b mu^2 / tau subject to lam a = c + b mu.

    The minimizer satisfies tau lam + mu = 0.  No box constraint on mu.
    """
    if not (a > 0 and b > 0 and tau > 0):
        raise InvalidParam(f"quad_min needs a, b, tau > 0, got a={a}, b={b}, tau={tau}")
    lam = c / (a + tau * b)
    return lam, -tau * lam


def quad_objective(a: float, b: float, lam: float, mu: float, tau: float) -> float:
    return a * lam * lam + b * mu * mu / tau


def _check_chi(chi: int) -> None:
    if chi not in (1, -1):
        raise InvalidFacet(f"chi must be +1 or -1, got {chi}")


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise InvalidParam(f"tau must be positive, got {tau}")


def _check_radii(inner: float, outer: float, name_in: str, name_out: str) -> None:
    if not inner > 0 or not outer > 0:
        raise InvalidParam(f"{name_in} and {name_out} must be positive")
    if abs(outer - inner) <= EDGE_TOL * max(1.0, outer):
        raise Degenerate(f"{name_out} == {name_in}: the facet has zero width")
    if outer < inner:
        raise InvalidParam(f"need {name_in} < {name_out}, got {inner} and {outer}")


def _radial_system(rows: Sequence[Sequence[float]], rhs: Sequence[float]) -> Tuple[float, float]:
    lam, c = np.linalg.solve(np.asarray(rows, dtype=float), np.asarray(rhs, dtype=float))
    return float(lam), float(c)


def max_abs_w(fld: RadialField, lo: float, hi: float) -> Tuple[float, float]:
    """(max |w|, argmax) over [lo, hi]."""
    if fld.closed:
        points = [lo, hi]
        if fld.dim == 2 and fld.A != 0.0 and fld.c / fld.A > 0:
            critical = math.sqrt(2.0 * fld.c / fld.A)
            if lo < critical < hi:
                points.append(critical)
        if fld.dim == 2 and lo <= 0.0 and fld.c != 0.0:
            return math.inf, 0.0
    else:
        inside = fld.nodes[(fld.nodes > lo) & (fld.nodes < hi)]
        points = [lo, hi] + inside.tolist()
    values = [abs(fld.w(p)) for p in points]
    k = int(np.argmax(values))
    return float(values[k]), float(points[k])


def facet_data(domain: DomainSpec, facet: FacetSpec) -> Tuple[float, float, float, List[FacetEdge]]:
    """(|F|, H(Gamma_F), H(d+F) - H(d-F), edges) for the balance identity."""
    edges = facet_edges(domain, facet)
    a = domain.region_measure(edges[0].position, edges[1].position)
    b = sum(e.measure for e in edges if e.kind == "gamma")
    c = sum(e.normal * facet.chi * e.measure for e in edges if e.kind == "interior")
    return a, b, c, edges


def _anchored_field(domain: DomainSpec, facet: FacetSpec, lam: float, edges: List[FacetEdge],
                    gamma_w: Dict[float, float]) -> RadialField:
    """The constant-divergence field with div z = lam matching one end of the facet."""
    order = {"interior": 0, "gamma": 1, "neumann": 2, "centre": 3}
    anchor = min(edges, key=lambda e: order[e.kind])
    r = anchor.position
    if anchor.kind == "centre":
        c = 0.0
    else:
        if anchor.kind == "interior":
            target = float(facet.chi)
        elif anchor.kind == "gamma":
            target = gamma_w[r]
        else:
            target = 0.0
        c = target - lam * r if domain.dim == 1 else r * (target - 0.5 * lam * r)
    return RadialField(dim=domain.dim, r_in=edges[0].position, r_out=edges[1].position, A=lam, c=c)


def _box_feasible(fld: RadialField, tol: float = FEAS_TOL) -> bool:
    value, _ = max_abs_w(fld, fld.r_in, fld.r_out)
    return value <= 1.0 + tol


def ch_coherent(domain: DomainSpec, facet: FacetSpec, tau: float) -> CahnHoffmanSolution:
    """Coherent field of a facet touching Gamma, from the quadratic kernel."""
    _check_tau(tau)
    a, b, c, edges = facet_data(domain, facet)
    if b <= 0:
        raise InvalidFacet("facet does not touch Gamma")
    lam, mu = quad_min(a, b, c, tau)
    gamma_w = {e.position: e.normal * mu for e in edges if e.kind == "gamma"}
    fld = _anchored_field(domain, facet, lam, edges, gamma_w)
    return CahnHoffmanSolution(field=fld, lam=lam, mu=mu, feasible=_box_feasible(fld))


def ch_pinned(domain: DomainSpec, facet: FacetSpec, tau: float,
              gap_sign: Optional[float] = None) -> CahnHoffmanSolution:
    """Field with |[z.nu]| = 1 on Gamma_F (the trace does not follow the facet).

    mu = sign(v - gamma u) when ``gap_sign`` is given; otherwise w = chi at
    the Gamma end, the value the bulk field would carry there.
    """
    _check_tau(tau)
    a, _, c, edges = facet_data(domain, facet)
    gamma_edges = [e for e in edges if e.kind == "gamma"]
    if not gamma_edges:
        raise InvalidFacet("facet does not touch Gamma")
    mus = {e.position: (float(np.sign(gap_sign)) if gap_sign else e.normal * facet.chi) for e in gamma_edges}
    lam = (c + sum(e.measure * mus[e.position] for e in gamma_edges)) / a
    gamma_w = {e.position: e.normal * mus[e.position] for e in gamma_edges}
    fld = _anchored_field(domain, facet, lam, edges, gamma_w)
    mu = mus[gamma_edges[0].position]
    return CahnHoffmanSolution(field=fld, lam=lam, mu=mu, feasible=_box_feasible(fld))


def ch_interior(domain: DomainSpec, facet: FacetSpec) -> CahnHoffmanSolution:
    lam = interior_velocity(domain, facet)
    _, _, _, edges = facet_data(domain, facet)
    fld = _anchored_field(domain, facet, lam, edges, {})
    return CahnHoffmanSolution(field=fld, lam=lam, mu=0.0, feasible=_box_feasible(fld))


def interior_velocity(domain: DomainSpec, facet: FacetSpec) -> float:
    """Velocity of a facet away from Gamma, from the balance identity.

    Central disc of radius a: 2 chi / a.  Facet [s, R] against a Neumann
    circle: -2 chi s / (R^2 - s^2).
    """
    a, b, c, _ = facet_data(domain, facet)
    if b > 0:
        raise InvalidFacet("facet touches Gamma; use classify_facet")
    return c / a


def ch_ball_coherent(R: float, rho: float, chi: int, tau: float = 1.0) -> CahnHoffmanSolution:
    """Field on the boundary facet {rho <= |x| <= R} of the disc B(0, R)."""
    _check_radii(rho, R, "rho", "R")
    _check_chi(chi)
    _check_tau(tau)
    # w(rho) = chi and tau lam + w(R) = 0
    lam, c = _radial_system([[0.5 * rho, 1.0 / rho], [0.5 * R + tau, 1.0 / R]], [chi, 0.0])
    fld = RadialField(dim=2, r_in=rho, r_out=R, A=lam, c=c)
    return CahnHoffmanSolution(field=fld, lam=lam, mu=-tau * lam, feasible=_box_feasible(fld))


def ch_annulus_coherent(r0: float, rho: float, chi: int, tau: float = 1.0) -> CahnHoffmanSolution:
    """Coherent field on {r0 <= |x| <= rho} with Gamma the inner circle.

    Admissible (|w| <= 1) iff rho + r0 >= 2 tau; otherwise ``feasible`` is False.
    """
    _check_radii(r0, rho, "r0", "rho")
    _check_chi(chi)
    _check_tau(tau)
    # w(rho) = chi and w(r0) = tau lam, since [z.nu] = -w(r0) = -tau lam
    lam, c = _radial_system([[0.5 * rho, 1.0 / rho], [0.5 * r0 - tau, 1.0 / r0]], [chi, 0.0])
    fld = RadialField(dim=2, r_in=r0, r_out=rho, A=lam, c=c)
    borderline = abs(rho + r0 - 2.0 * tau) <= BORDERLINE_TOL * max(1.0, rho)
    return CahnHoffmanSolution(field=fld, lam=lam, mu=-tau * lam, feasible=borderline or _box_feasible(fld))


def ch_annulus_detached(r0: float, rho: float, chi: int) -> CahnHoffmanSolution:
    """Field with w(r0) = w(rho) = chi; the boundary layer is pinned at mu = -chi."""
    _check_radii(r0, rho, "r0", "rho")
    _check_chi(chi)
    lam, c = _radial_system([[0.5 * r0, 1.0 / r0], [0.5 * rho, 1.0 / rho]], [chi, chi])
    fld = RadialField(dim=2, r_in=r0, r_out=rho, A=lam, c=c)
    return CahnHoffmanSolution(field=fld, lam=lam, mu=-float(chi), feasible=_box_feasible(fld))


def ch_interval_coherent(L: float, facet: FacetSpec, tau: float = 1.0) -> CahnHoffmanSolution:
    """Boundary facet of (0, L); at the right end mu = tau chi / (tau + L - b)."""
    domain = make_domain("interval", L=L, n=MIN_NODES)
    check_facet(domain, facet)
    return ch_coherent(domain, facet, tau)


def pinned_field_is_minimizer(lam: float, mu: float, tau: float, tol: float = COHERENCE_TOL) -> bool:
    """(lam + mu / tau) sgn(mu) <= 0: a field with |mu| = 1 minimizes I_tau."""
    _check_tau(tau)
    return (lam + mu / tau) * float(np.sign(mu)) <= tol


def _check_field_domain(fld: RadialField, facet: FacetSpec, domain: DomainSpec) -> None:
    if fld.dim != domain.dim:
        raise DomainMismatch(f"field is {fld.dim}-dimensional, the domain {domain.dim}-dimensional")
    slack = 1e-9 * max(1.0, domain.scale)
    if fld.r_in > facet.inner + slack or fld.r_out < facet.outer - slack:
        raise DomainMismatch(
            f"field lives on [{fld.r_in}, {fld.r_out}], the facet is [{facet.inner}, {facet.outer}]")


def _bulk_integrals(fld: RadialField, facet: FacetSpec, domain: DomainSpec) -> Tuple[float, float]:
    """(int_F div z, int_F |div z|^2)."""
    if fld.closed:
        area = domain.region_measure(facet.inner, facet.outer)
        return fld.A * area, fld.A * fld.A * area
    slack = 1e-9 * max(1.0, domain.scale)
    keep = (fld.nodes[:-1] >= facet.inner - slack) & (fld.nodes[1:] <= facet.outer + slack)
    div = fld.cell_divergence()[keep]
    cells = fld.cell_measures()[keep]
    return float(np.sum(div * cells)), float(np.sum(div * div * cells))


def _gamma_fluxes(fld: RadialField, facet: FacetSpec, domain: DomainSpec) -> List[Tuple[float, float]]:
    """(mu, measure) for every Gamma piece of the facet."""
    out = []
    for side in facet_gamma_sides(domain, facet):
        position = domain.side_position(side)
        normal = -1.0 if side == "inner" else 1.0
        out.append((normal * fld.w(position), domain.sphere_measure(position)))
    return out


def i_tau(fld: RadialField, facet: FacetSpec, domain: DomainSpec, tau: float) -> float:
    """int_F |div z|^2 + (1/tau) int_{Gamma_F} [z.nu]^2."""
    _check_tau(tau)
    _check_field_domain(fld, facet, domain)
    _, bulk = _bulk_integrals(fld, facet, domain)
    boundary = sum(measure * mu * mu for mu, measure in _gamma_fluxes(fld, facet, domain))
    return bulk + boundary / tau


def balance_identity(fld: RadialField, facet: FacetSpec, domain: DomainSpec) -> Tuple[float, float]:
    """Both sides of  int_F div z = H(d+F) - H(d-F) + int_{Gamma_F} [z.nu]."""
    _check_field_domain(fld, facet, domain)
    lhs, _ = _bulk_integrals(fld, facet, domain)
    rhs = 0.0
    for edge in facet_edges(domain, facet):
        if edge.kind == "interior":
            rhs += edge.normal * facet.chi * edge.measure
        elif edge.kind == "gamma":
            rhs += edge.normal * fld.w(edge.position) * edge.measure
    return lhs, rhs


def verify_ch(fld: RadialField, facet: FacetSpec, domain: DomainSpec) -> Tuple[bool, List[Dict[str, Any]]]:
    """Check |z| <= 1, z = chi e_r at interior ends and z.nu = 0 on Neumann ends."""
    violations: List[Dict[str, Any]] = []
    try:
        _check_field_domain(fld, facet, domain)
    except DomainMismatch as e:
        return False, [{"condition": "coverage", "position": None, "value": str(e)}]

    value, position = max_abs_w(fld, facet.inner, facet.outer)
    if value > 1.0 + BOX_TOL:
        violations.append({"condition": "box", "position": position, "value": value})
    for edge in facet_edges(domain, facet):
        if edge.kind == "centre":
            if fld.closed and abs(fld.c) > BOX_TOL:
                violations.append({"condition": "centre_singularity", "position": 0.0, "value": fld.c})
            continue
        w = fld.w(edge.position)
        if edge.kind == "interior" and abs(w - facet.chi) > BOX_TOL:
            violations.append({"condition": "interior_trace", "position": edge.position, "value": w})
        elif edge.kind == "neumann" and abs(w) > BOX_TOL:
            violations.append({"condition": "neumann_trace", "position": edge.position, "value": w})
    return not violations, violations


def scale_field(fld: RadialField, domain: DomainSpec, tau_ratio: float) -> Tuple[RadialField, DomainSpec]:
    """Dilate field and domain by tau_ratio; I_tau(z^tau) = tau^(N-2) I_1(z)."""
    if not tau_ratio > 0:
        raise InvalidParam(f"tau_ratio must be positive, got {tau_ratio}")
    return fld.scaled(tau_ratio), scale_domain(domain, tau_ratio)


def _bulk_speed_at(domain: DomainSpec, chi: int, r: float) -> float:
    """div(chi x/|x|) at radius r: chi (N - 1) / r."""
    return 0.0 if domain.dim == 1 else chi / r


def onset_report(domain: DomainSpec, chi: int, tau: float, side: Optional[str] = None) -> FacetReport:
    """What happens at a piece of Gamma where the bulk is strictly monotone.

    The bulk trace moves with div(chi e_r) and a free boundary layer with
    -[z.nu]/tau.  A facet forms when the bulk lags the layer, nothing happens
    when both agree, and the layer detaches when the bulk runs ahead.
    """
    _check_chi(chi)
    _check_tau(tau)
    side = side or domain.gamma[0]
    if side not in domain.gamma:
        raise InvalidFacet(f"side '{side}' is not part of Gamma")
    normal = -1.0 if side == "inner" else 1.0
    position = domain.side_position(side)
    bulk = _bulk_speed_at(domain, chi, position)
    mu = normal * chi
    v_free = -mu / tau
    kappa = curvature_at(domain, side)
    predicts = kappa > -1.0 / tau

    lead = normal * chi * (bulk - v_free)
    scale = max(1.0, abs(bulk), 1.0 / tau)
    common = dict(tau=tau, curvature=kappa, curvature_predicts_coherent=predicts, bulk_speed=bulk)
    if lead > BORDERLINE_TOL * scale:
        bound = None
        if domain.kind == "annulus" and side == "inner" and "outer" not in domain.gamma:
            R, r0 = domain.outer, domain.inner
            bound = 2.0 * R / (R * R - r0 * r0 + 2.0 * tau * r0)
        lam = -mu / tau
        report = FacetReport(lam=lam, mu=mu, calibrable=True, coherent=True, detached=False,
                             case="onset_facet_forms", v_t=lam, gap_rate=0.0,
                             velocity_lower_bound=bound, **common)
    elif lead >= -BORDERLINE_TOL * scale:
        report = FacetReport(lam=bulk, mu=mu, calibrable=False, coherent=True, detached=False,
                             case="onset_neutral", v_t=v_free, gap_rate=0.0, **common)
    else:
        report = FacetReport(lam=bulk, mu=mu, calibrable=False, coherent=False, detached=True,
                             case="onset_detach", v_t=v_free, gap_rate=v_free - bulk, **common)
    logger.debug("onset at %s of %s: %s", side, domain.kind, report.case)
    return report


def _touching_side(domain: DomainSpec, facet: FacetSpec) -> str:
    if abs(facet.inner - domain.inner) <= EDGE_TOL * max(1.0, domain.scale):
        return "inner"
    return "outer"


def classify_facet(domain: DomainSpec, facet: FacetSpec, tau: float = 1.0, trace_matched: bool = True,
                   gap_sign: Optional[float] = None) -> FacetReport:
    """Decide whether a facet is calibrable, coherent or detached and how fast it moves.

    Args:
        domain: the geometry
        facet: the facet; an ``onset`` facet asks what happens at Gamma
        tau: weight of the boundary layer
        trace_matched: whether gamma u = v on the facet's piece of Gamma
        gap_sign: sign of v - gamma u when the trace is not matched

    Raises:
        InvalidFacet: if the facet does not fit the domain.
    """
    _check_tau(tau)
    check_facet(domain, facet)
    if facet.onset:
        return onset_report(domain, facet.chi, tau, _touching_side(domain, facet))

    sides = facet_gamma_sides(domain, facet)
    if not sides:
        sol = ch_interior(domain, facet)
        ok, violations = verify_ch(sol.field, facet, domain)
        return FacetReport(lam=sol.lam, mu=0.0, calibrable=ok, coherent=False, detached=False,
                           case="interior", tau=tau, witness=sol.field, violations=violations)

    kappa = min(curvature_at(domain, s) for s in sides)
    common = dict(tau=tau, curvature=kappa, curvature_predicts_coherent=kappa > -1.0 / tau)
    interior = [e for e in facet_edges(domain, facet) if e.kind == "interior"]
    bulk = _bulk_speed_at(domain, facet.chi, interior[0].position) if len(interior) == 1 else None

    if trace_matched:
        sol = ch_coherent(domain, facet, tau)
        borderline = (domain.kind == "annulus" and sides == ["inner"] and len(interior) == 1
                      and abs(facet.outer + domain.inner - 2.0 * tau) <= BORDERLINE_TOL * max(1.0, facet.outer))
        if sol.feasible or borderline:
            if domain.kind == "annulus":
                case = "annulus_borderline" if borderline else "annulus_coherent"
            else:
                case = f"{domain.kind}_coherent"
            _, violations = verify_ch(sol.field, facet, domain)
            return FacetReport(lam=sol.lam, mu=sol.mu, calibrable=True, coherent=True, detached=False,
                               case=case, witness=sol.field, v_t=-sol.mu / tau, bulk_speed=bulk,
                               gap_rate=0.0, violations=violations, **common)
        logger.debug("coherent field violates |w| <= 1 on [%g, %g]; pinning the trace",
                     facet.inner, facet.outer)

    sol = ch_pinned(domain, facet, tau, gap_sign)
    ok, violations = verify_ch(sol.field, facet, domain)
    calibrable = ok and pinned_field_is_minimizer(sol.lam, sol.mu, tau)
    detached = abs(tau * sol.lam + sol.mu) > COHERENCE_TOL * max(1.0, abs(sol.lam) * tau)
    v_t = -sol.mu / tau
    return FacetReport(lam=sol.lam, mu=sol.mu, calibrable=calibrable, coherent=not detached, detached=detached,
                       case=f"{domain.kind}_detached", witness=sol.field, v_t=v_t, bulk_speed=bulk,
                       gap_rate=v_t - sol.lam, violations=violations, **common)


def classify_annulus_cell(r0: float, rho: float, tau: float = 1.0, R: Optional[float] = None,
                          chi: int = 1) -> Dict[str, Any]:
    """One cell of the (r0, rho) phase diagram for the inner-circle facet."""
    R = R if R is not None else rho + 1.0
    domain = make_domain("annulus", r0=r0, R=R, gamma="inner", n=MIN_NODES)
    if abs(rho - r0) <= EDGE_TOL * max(1.0, rho):
        report = classify_facet(domain, FacetSpec(r0, r0, chi, onset=True), tau)
    else:
        report = classify_facet(domain, FacetSpec(r0, rho, chi), tau)
    return {"r0": r0, "rho": rho, "tau": tau, "case": report.case, "detached": report.detached,
            "coherent": report.coherent, "lambda": report.lam, "mu": report.mu}
