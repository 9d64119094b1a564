"""The minimal section of dE on facets.

On each facet the field w is sampled on a sub-grid and

    sum_cells |cell| (div z)^2 + (1/tau) sum_{Gamma nodes} |Gamma| (z.nu)^2

is minimized subject to |w| <= 1, w = chi at interior ends, w = 0 on Neumann
ends and at the centre, and on Gamma either a free trace (gamma u = v) or a
pinned one, [z.nu] = sign(v - gamma u).  Facets do not interact, so every
facet is an independent box QP.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .box_qp import solve_box_qp
from .cahn_hoffman import RadialField
from .errors import DomainMismatch, Infeasible, NonMonotone
from .geometry import DomainSpec, FacetSpec, facet_edges
from .states_energy import State, check_state

logger = logging.getLogger(__name__)

GRAD_TOL = 1e-7
TRACE_TOL = 1e-9
MIN_FACET_NODES = 16


@dataclass
class FacetSection:
    facet: FacetSpec
    field: RadialField
    lam: float
    mu: Dict[str, float]
    pinned: Dict[str, bool]
    objective: float
    iterations: int

    def to_dict(self) -> Dict[str, Any]:
        return {"facet": self.facet.to_dict(), "lambda": self.lam, "mu": self.mu,
                "pinned": self.pinned, "objective": self.objective, "iterations": self.iterations}


@dataclass
class SectionResult:
    sections: List[FacetSection] = field(default_factory=list)

    @property
    def lams(self) -> List[float]:
        return [s.lam for s in self.sections]

    @property
    def mus(self) -> Dict[str, float]:
        out: Dict[str, float] = {}
        for s in self.sections:
            out.update(s.mu)
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {"sections": [s.to_dict() for s in self.sections], "mu": self.mus}


@dataclass
class Section1D:
    nodes: np.ndarray
    z: np.ndarray
    z0: float
    zL: float
    sections: List[FacetSection]
    chi: int


def _data_scale(u: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(u)))) if u.size else 1.0


def detect_facets(state: Union[State, np.ndarray], domain: DomainSpec, grad_tol: float = GRAD_TOL) -> List[FacetSpec]:
    """Maximal runs of grid cells on which u is flat, as FacetSpecs.

    A cell is flat when |u_{i+1} - u_i| <= grad_tol * max(1, |u|_inf).
    Raises NonMonotone for a flat run sitting at a local extremum.
    """
    u = state.u if isinstance(state, State) else np.asarray(state, dtype=float)
    if u.shape != (domain.n,):
        raise DomainMismatch(f"u has {u.size} entries, the grid {domain.n}")
    nodes = domain.nodes
    diffs = np.diff(u)
    flat = np.abs(diffs) <= grad_tol * _data_scale(u)
    signs = np.where(flat, 0, np.sign(diffs)).astype(int)

    facets = []
    i = 0
    while i < flat.size:
        if not flat[i]:
            i += 1
            continue
        j = i
        while j + 1 < flat.size and flat[j + 1]:
            j += 1
        left = signs[i - 1] if i > 0 else 0
        right = signs[j + 1] if j + 1 < flat.size else 0
        if left and right and left != right:
            raise NonMonotone(f"flat region [{nodes[i]}, {nodes[j + 1]}] is a local extremum")
        chi = left or right or 1
        facets.append(FacetSpec(float(nodes[i]), float(nodes[j + 1]), int(chi)))
        i = j + 1
    return facets


def monotonicity_sign(u: np.ndarray, grad_tol: float = GRAD_TOL) -> int:
    """chi of a monotone array, 0 if constant; NonMonotone otherwise."""
    diffs = np.diff(u)
    tol = grad_tol * _data_scale(u)
    up = np.any(diffs > tol)
    down = np.any(diffs < -tol)
    if up and down:
        raise NonMonotone("u increases and decreases outside its facets")
    return 1 if up else (-1 if down else 0)


def _divergence_matrix(nodes: np.ndarray, dim: int) -> np.ndarray:
    """Rows map nodal w to the constant div z of each cell."""
    m = nodes.size
    D = np.zeros((m - 1, m))
    idx = np.arange(m - 1)
    if dim == 1:
        dx = np.diff(nodes)
        D[idx, idx] = -1.0 / dx
        D[idx, idx + 1] = 1.0 / dx
    else:
        d2 = np.diff(nodes ** 2)
        D[idx, idx] = -2.0 * nodes[:-1] / d2
        D[idx, idx + 1] = 2.0 * nodes[1:] / d2
    return D


def _solve_facet(domain: DomainSpec, facet: FacetSpec, tau: float, nodes: np.ndarray,
                 matched: Dict[str, bool], gap_sign: Dict[str, float], max_iter: int) -> FacetSection:
    if facet.onset:
        raise Infeasible("a zero-width facet has no section; use boundary_onset")
    edges = facet_edges(domain, facet)
    m = nodes.size
    fixed: Dict[int, float] = {}
    gamma_nodes: Dict[int, str] = {}
    pinned: Dict[str, bool] = {}
    for index, side, edge in ((0, "inner", edges[0]), (m - 1, "outer", edges[1])):
        if edge.kind == "interior":
            fixed[index] = float(facet.chi)
        elif edge.kind in ("neumann", "centre"):
            fixed[index] = 0.0
        else:
            gamma_nodes[index] = side
            pinned[side] = not matched.get(side, True)
            if pinned[side]:
                # no sign given: w = chi, the bulk value
                mu = gap_sign.get(side) or edge.normal * facet.chi
                fixed[index] = edge.normal * float(np.sign(mu))
    if any(abs(value) > 1.0 for value in fixed.values()):
        raise Infeasible(f"end conditions of facet [{facet.inner}, {facet.outer}] leave the unit box")

    D = _divergence_matrix(nodes, domain.dim)
    cells = np.diff(nodes) if domain.dim == 1 else np.pi * np.diff(nodes ** 2)
    H = 2.0 * D.T @ (cells[:, None] * D)
    for index in gamma_nodes:
        H[index, index] += 2.0 * domain.sphere_measure(nodes[index]) / tau

    w = np.zeros(m)
    fixed_idx = np.array(sorted(fixed), dtype=int)
    free = np.ones(m, dtype=bool)
    free[fixed_idx] = False
    w[fixed_idx] = [fixed[i] for i in fixed_idx]
    iterations = 0
    if np.any(free):
        H_ff = H[np.ix_(free, free)]
        g = H[np.ix_(free, ~free)] @ w[~free]
        tol = 1e-13 * max(1.0, float(np.max(np.abs(H_ff))))
        result = solve_box_qp(H_ff, g, -1.0, 1.0, tol=tol, max_iter=max_iter)
        w[free] = result.x
        iterations = result.iterations

    fld = RadialField(dim=domain.dim, r_in=float(nodes[0]), r_out=float(nodes[-1]), nodes=nodes, samples=w)
    lam = float(np.sum(fld.cell_divergence() * cells) / np.sum(cells))
    mus = {side: (-1.0 if side == "inner" else 1.0) * float(w[index]) for index, side in gamma_nodes.items()}
    objective = 0.5 * float(w @ H @ w)
    logger.debug("section on [%g, %g]: lam=%.12g mu=%s (%d QP iterations)",
                 facet.inner, facet.outer, lam, mus, iterations)
    return FacetSection(facet=facet, field=fld, lam=lam, mu=mus, pinned=pinned,
                        objective=objective, iterations=iterations)


def _facet_nodes(domain: DomainSpec, facet: FacetSpec, n_facet: Optional[int]) -> np.ndarray:
    m = n_facet or max(MIN_FACET_NODES, int(round(facet.width / domain.h)) + 1)
    return np.linspace(facet.inner, facet.outer, m)


def _trace_status(state: State, domain: DomainSpec):
    gap = state.v - state.u[domain.gamma_nodes]
    tol = TRACE_TOL * _data_scale(state.u)
    matched = {side: bool(abs(g) <= tol) for side, g in zip(domain.gamma, gap)}
    signs = {side: float(np.sign(g)) for side, g in zip(domain.gamma, gap) if abs(g) > tol}
    return matched, signs


def minimal_section_radial(source: Union[State, FacetSpec, Sequence[FacetSpec]], domain: DomainSpec,
                           tau: float = 1.0, trace_matched: Union[bool, Dict[str, bool]] = True,
                           n_facet: Optional[int] = None, max_iter: int = 200,
                           gap_sign: Union[None, float, Dict[str, float]] = None) -> SectionResult:
    """Per-facet minimal sections, with div z and [z.nu] read off the fields.

    ``source`` is either a state, whose flat regions and trace gaps are
    detected, or explicit facets together with ``trace_matched`` and
    ``gap_sign``, the sign of v - gamma u at each unmatched Gamma end (a
    number for every end or a dict by side).  A pinned end without a sign
    gets mu = nu chi, so that w = chi there as on the bulk side; this is
    the default of ch_pinned as well.

    Raises:
        Infeasible: for facets without an admissible field.
        NotConverged: if a QP needs more than max_iter iterations.
    """
    if isinstance(source, State):
        check_state(source, domain)
        facets = detect_facets(source, domain)
        matched, signs = _trace_status(source, domain)
        grid = domain.nodes
        node_sets = [grid[(grid >= f.inner) & (grid <= f.outer)] for f in facets]
    else:
        facets = [source] if isinstance(source, FacetSpec) else list(source)
        if isinstance(trace_matched, dict):
            matched = dict(trace_matched)
        else:
            matched = {side: bool(trace_matched) for side in domain.gamma}
        if isinstance(gap_sign, dict):
            signs = {side: float(s) for side, s in gap_sign.items() if s}
        else:
            signs = {side: float(gap_sign) for side in domain.gamma} if gap_sign else {}
        node_sets = [_facet_nodes(domain, f, n_facet) for f in facets]

    result = SectionResult()
    for facet, nodes in zip(facets, node_sets):
        result.sections.append(_solve_facet(domain, facet, tau, nodes, matched, signs, max_iter))
    return result


def minimal_section_1d(state: State, domain: DomainSpec, tau: float = 1.0, max_iter: int = 200) -> Section1D:
    """Minimal section of a monotone state on an interval.

    z = chi where u is strictly monotone and the QP solution on each facet.
    """
    if domain.dim != 1:
        raise DomainMismatch("minimal_section_1d needs an interval")
    check_state(state, domain)
    chi = monotonicity_sign(state.u)
    facets = detect_facets(state, domain)
    matched, signs = _trace_status(state, domain)
    nodes = domain.nodes
    z = np.full(domain.n, float(chi))
    sections = []
    for facet in facets:
        inside = (nodes >= facet.inner) & (nodes <= facet.outer)
        section = _solve_facet(domain, facet, tau, nodes[inside], matched, signs, max_iter)
        z[inside] = section.field.samples
        sections.append(section)
    return Section1D(nodes=nodes, z=z, z0=float(z[0]), zL=float(z[-1]), sections=sections, chi=chi)
