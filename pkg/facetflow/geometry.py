"""Domains, grids and the boundary piece Gamma that carries the dynamic condition.

Three geometries are supported: an interval (0, L), a disc B(0, R) and an
annulus A(r0, R).  Radially symmetric states live on a grid in r, so every
geometry is one-dimensional on the grid and only the measures differ.
"""
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np

from .errors import InvalidFacet, InvalidGeometry

KINDS = ("interval", "ball", "annulus")
MIN_NODES = 8

# sides of the grid that may belong to Gamma for each geometry
_GAMMA_CHOICES = {
    "interval": {"default": ("inner", "outer"), "both": ("inner", "outer")},
    "ball": {"default": ("outer",), "outer": ("outer",)},
    "annulus": {
        "default": ("inner",),
        "inner": ("inner",),
        "outer": ("outer",),
        "both": ("inner", "outer"),
    },
}

EDGE_TOL = 1e-12


@dataclass(frozen=True)
class DomainSpec:
    """A validated geometry together with its uniform grid.

    ``inner``/``outer`` are the grid endpoints: (0, L) for the interval,
    (0, R) for the ball and (r0, R) for the annulus.  ``gamma`` names the
    sides of the grid that form Gamma.
    """
    kind: str
    inner: float
    outer: float
    gamma: Tuple[str, ...]
    n: int

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def radial(self) -> bool:
        return self.dim == 2

    @property
    def has_centre(self) -> bool:
        return self.kind == "ball"

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.inner, self.outer, self.n)

    @property
    def h(self) -> float:
        return (self.outer - self.inner) / (self.n - 1)

    @property
    def midpoints(self) -> np.ndarray:
        r = self.nodes
        return 0.5 * (r[1:] + r[:-1])

    @property
    def scale(self) -> float:
        return self.outer

    def sphere_measure(self, r: float) -> float:
        """H^{N-1} of the level set {|x| = r} (a point in 1D)."""
        return 1.0 if self.dim == 1 else 2.0 * math.pi * r

    def region_measure(self, a: float, b: float) -> float:
        """Lebesgue measure of {a <= |x| <= b}."""
        if self.dim == 1:
            return b - a
        return math.pi * (b * b - a * a)

    @property
    def volume(self) -> float:
        return self.region_measure(self.inner, self.outer)

    @property
    def edge_weights(self) -> np.ndarray:
        """Cross-sectional measure attached to each grid cell (midpoint rule)."""
        if self.dim == 1:
            return np.ones(self.n - 1)
        return 2.0 * math.pi * self.midpoints

    @property
    def node_masses(self) -> np.ndarray:
        """Dual-cell measures; they sum to |Omega| exactly."""
        edges = np.concatenate(([self.inner], self.midpoints, [self.outer]))
        if self.dim == 1:
            return np.diff(edges)
        return math.pi * np.diff(edges ** 2)

    @property
    def gamma_nodes(self) -> np.ndarray:
        return np.array([0 if side == "inner" else self.n - 1 for side in self.gamma], dtype=int)

    @property
    def gamma_normals(self) -> np.ndarray:
        """Outer normal of Omega at each Gamma node, as a sign along the grid."""
        return np.array([-1.0 if side == "inner" else 1.0 for side in self.gamma])

    @property
    def gamma_weights(self) -> np.ndarray:
        return np.array([self.sphere_measure(self.side_position(side)) for side in self.gamma])

    @property
    def gamma_measure(self) -> float:
        return float(np.sum(self.gamma_weights))

    def side_position(self, side: str) -> float:
        return self.inner if side == "inner" else self.outer

    def boundary_kind(self, side: str) -> str:
        """'gamma', 'neumann' or 'centre' for the given end of the grid."""
        if side in self.gamma:
            return "gamma"
        if side == "inner" and self.has_centre:
            return "centre"
        return "neumann"

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind, "gamma": list(self.gamma), "n": self.n}
        if self.kind == "interval":
            out["L"] = self.outer
        elif self.kind == "ball":
            out["R"] = self.outer
        else:
            out["r0"] = self.inner
            out["R"] = self.outer
        return out


def make_domain(kind: str, L: float = None, R: float = None, r0: float = None,
                gamma: str = "default", n: int = 400) -> DomainSpec:
    """Build a validated DomainSpec.

    Args:
        kind: 'interval', 'ball' or 'annulus'
        L: interval length
        R: outer radius (ball, annulus)
        r0: inner radius (annulus)
        gamma: Gamma selector; 'default' picks both ends of the interval,
            the circle of the ball and the inner circle of the annulus
        n: number of grid nodes (at least 8)

    Raises:
        InvalidGeometry: on violated inequalities or an empty Gamma.
    """
    if kind not in KINDS:
        raise InvalidGeometry(f"unknown domain kind '{kind}'")
    if n is None or int(n) != n or n < MIN_NODES:
        raise InvalidGeometry(f"n must be an integer >= {MIN_NODES}, got {n}")
    choices = _GAMMA_CHOICES[kind]
    if gamma not in choices:
        raise InvalidGeometry(f"gamma '{gamma}' is not available for {kind}; choose from {sorted(choices)}")

    if kind == "interval":
        if L is None or not L > 0:
            raise InvalidGeometry(f"interval needs L > 0, got {L}")
        inner, outer = 0.0, float(L)
    elif kind == "ball":
        if R is None or not R > 0:
            raise InvalidGeometry(f"ball needs R > 0, got {R}")
        inner, outer = 0.0, float(R)
    else:
        if r0 is None or R is None or not 0 < r0 < R:
            raise InvalidGeometry(f"annulus needs 0 < r0 < R, got r0={r0}, R={R}")
        inner, outer = float(r0), float(R)

    if not math.isfinite(inner) or not math.isfinite(outer):
        raise InvalidGeometry("domain bounds must be finite")
    domain = DomainSpec(kind=kind, inner=inner, outer=outer, gamma=choices[gamma], n=int(n))
    if domain.gamma_measure <= 0:
        raise InvalidGeometry("Gamma has zero measure")
    return domain


def domain_from_dict(data: Dict[str, Any]) -> DomainSpec:
    gamma = data.get("gamma", "default")
    if isinstance(gamma, (list, tuple)):
        gamma = "both" if len(gamma) == 2 else gamma[0]
        if data.get("kind") == "ball":
            gamma = "outer"
    return make_domain(data.get("kind"), L=data.get("L"), R=data.get("R"), r0=data.get("r0"),
                       gamma=gamma, n=data.get("n", 400))


def scale_domain(domain: DomainSpec, s: float) -> DomainSpec:
    """The dilated domain {s x : x in Omega} on a grid with the same node count."""
    if not s > 0:
        raise InvalidGeometry(f"scale factor must be positive, got {s}")
    return DomainSpec(kind=domain.kind, inner=domain.inner * s, outer=domain.outer * s,
                      gamma=domain.gamma, n=domain.n)


def curvature_at(domain: DomainSpec, side: str) -> float:
    """Inward mean curvature of one boundary piece.

    Points of the interval are flat; the outer circle bends towards Omega
    (+1/R) and the inner circle of an annulus away from it (-1/r0).
    """
    if domain.dim == 1:
        return 0.0
    if side == "outer":
        return 1.0 / domain.outer
    return -1.0 / domain.inner


def gamma_curvature(domain: DomainSpec) -> float:
    """inf of the curvature over Gamma."""
    return min(curvature_at(domain, side) for side in domain.gamma)


def curvature_predicts_coherent(domain: DomainSpec, tau: float) -> bool:
    """The curvature criterion inf kappa > -1/tau."""
    return gamma_curvature(domain) > -1.0 / tau


@dataclass(frozen=True)
class FacetSpec:
    """A radially symmetric facet {inner <= |x| <= outer} with orientation chi.

    ``onset`` marks the degenerate facet inner == outer used when asking what
    happens at a boundary that carries no facet yet.
    """
    inner: float
    outer: float
    chi: int
    onset: bool = False

    def __post_init__(self):
        if self.chi not in (1, -1):
            raise InvalidFacet(f"chi must be +1 or -1, got {self.chi}")
        if self.onset:
            if abs(self.outer - self.inner) > EDGE_TOL * max(1.0, abs(self.outer)):
                raise InvalidFacet("an onset facet must have inner == outer")
        elif not self.inner < self.outer:
            raise InvalidFacet(f"facet needs inner < outer, got [{self.inner}, {self.outer}]")

    def flipped(self) -> "FacetSpec":
        return FacetSpec(self.inner, self.outer, -self.chi, self.onset)

    def scaled(self, s: float) -> "FacetSpec":
        return FacetSpec(self.inner * s, self.outer * s, self.chi, self.onset)

    @property
    def width(self) -> float:
        return self.outer - self.inner

    def to_dict(self) -> Dict[str, Any]:
        return {"inner": self.inner, "outer": self.outer, "chi": self.chi, "onset": self.onset}


@dataclass(frozen=True)
class FacetEdge:
    """One end of a facet.

    ``normal`` is the outer normal of F along the grid (-1 at the inner end),
    ``kind`` is 'interior', 'gamma', 'neumann' or 'centre'.
    """
    position: float
    kind: str
    normal: float
    measure: float


def _touches(value: float, target: float) -> bool:
    return abs(value - target) <= EDGE_TOL * max(1.0, abs(target))


def check_facet(domain: DomainSpec, facet: FacetSpec) -> None:
    lo = domain.inner - EDGE_TOL * max(1.0, domain.scale)
    hi = domain.outer + EDGE_TOL * max(1.0, domain.scale)
    if facet.inner < lo or facet.outer > hi:
        raise InvalidFacet(
            f"facet [{facet.inner}, {facet.outer}] is not inside [{domain.inner}, {domain.outer}]")
    if facet.onset and not (_touches(facet.inner, domain.inner) or _touches(facet.outer, domain.outer)):
        raise InvalidFacet("an onset facet must sit on the boundary")


def facet_edges(domain: DomainSpec, facet: FacetSpec) -> List[FacetEdge]:
    """Classify both ends of a (non-onset) facet."""
    check_facet(domain, facet)
    edges = []
    for side, position, normal in (("inner", facet.inner, -1.0), ("outer", facet.outer, 1.0)):
        if _touches(position, domain.side_position(side)):
            kind = domain.boundary_kind(side)
            position = domain.side_position(side)
        else:
            kind = "interior"
        measure = 0.0 if kind == "centre" else domain.sphere_measure(position)
        edges.append(FacetEdge(position=position, kind=kind, normal=normal, measure=measure))
    return edges


def facet_gamma_sides(domain: DomainSpec, facet: FacetSpec) -> List[str]:
    sides = []
    if _touches(facet.inner, domain.inner) and "inner" in domain.gamma:
        sides.append("inner")
    if _touches(facet.outer, domain.outer) and "outer" in domain.gamma:
        sides.append("outer")
    return sides
