"""Initial profiles u0 as used by scenarios and the exact trackers.

A profile is a monotone function of x (or r) with an optional bulk interval
[start, stop] outside of which it is flat.  Closed forms know their
derivative; tabulated samples fall back to centred differences.
"""
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import NonMonotone, ValidationError
from .geometry import DomainSpec

PROFILE_KINDS = ("linear_ramp", "radial_ramp", "piecewise_ramp", "tabulated")
DIFF_STEP = 1e-6


@dataclass(frozen=True)
class Profile:
    kind: str
    slope: float = 1.0
    offset: float = 0.0
    start: Optional[float] = None
    stop: Optional[float] = None
    nodes: Optional[Sequence[float]] = None
    values: Optional[Sequence[float]] = None
    sign: float = 1.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValidationError(f"unknown profile kind '{self.kind}'")
        if self.kind == "tabulated":
            if self.nodes is None or self.values is None or len(self.nodes) != len(self.values) or len(self.nodes) < 2:
                raise ValidationError("tabulated profile needs matching nodes and values")
            if np.any(np.diff(np.asarray(self.nodes, dtype=float)) <= 0):
                raise ValidationError("tabulated nodes must be strictly increasing")
        if self.kind == "piecewise_ramp":
            if self.start is None or self.stop is None or not self.start <= self.stop:
                raise ValidationError("piecewise_ramp needs start <= stop")

    def _base(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind in ("linear_ramp", "radial_ramp"):
            return self.offset + self.slope * x
        if self.kind == "piecewise_ramp":
            return self.offset + self.slope * (np.clip(x, self.start, self.stop) - self.start)
        return np.interp(x, np.asarray(self.nodes, dtype=float), np.asarray(self.values, dtype=float))

    def __call__(self, x):
        out = self.sign * self._base(x)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, x):
        """du0/dx; at the ends of the bulk the one-sided value from the bulk."""
        x = np.asarray(x, dtype=float)
        if self.kind in ("linear_ramp", "radial_ramp"):
            out = np.full_like(x, self.sign * self.slope)
        elif self.kind == "piecewise_ramp":
            inside = (x >= self.start) & (x <= self.stop)
            out = np.where(inside, self.sign * self.slope, 0.0)
        else:
            scale = max(1.0, float(np.max(np.abs(self.nodes))))
            step = DIFF_STEP * scale
            out = (self(x + step) - self(x - step)) / (2.0 * step)
        return float(out) if np.ndim(out) == 0 else out

    def bulk_interval(self, lo: float, hi: float):
        """The part of [lo, hi] on which the profile is not flat."""
        if self.kind == "piecewise_ramp":
            return max(lo, self.start), min(hi, self.stop)
        return lo, hi

    def chi(self, lo: float, hi: float) -> int:
        rise = self(hi) - self(lo)
        if rise == 0:
            return 0
        return 1 if rise > 0 else -1

    def inverse(self, height: float, lo: float, hi: float) -> float:
        """x in [lo, hi] with u0(x) = height, by bisection; clamps outside the range."""
        f_lo = self(lo) - height
        f_hi = self(hi) - height
        if f_lo == 0:
            return lo
        if f_hi == 0:
            return hi
        if f_lo * f_hi > 0:
            return lo if abs(f_lo) < abs(f_hi) else hi
        xtol = 1e-14 * max(1.0, abs(hi))
        return float(optimize.bisect(lambda x: self(x) - height, lo, hi, xtol=xtol, maxiter=200))

    def negated(self) -> "Profile":
        return Profile(kind=self.kind, slope=self.slope, offset=self.offset, start=self.start,
                       stop=self.stop, nodes=self.nodes, values=self.values, sign=-self.sign)

    def sample(self, domain: DomainSpec) -> np.ndarray:
        return np.asarray(self(domain.nodes), dtype=float)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind}
        if self.kind == "tabulated":
            out["nodes"] = list(map(float, self.nodes))
            out["values"] = list(map(float, self.values))
        else:
            out["slope"] = self.slope
            out["offset"] = self.offset
        if self.kind == "piecewise_ramp":
            out["start"] = self.start
            out["stop"] = self.stop
        if self.sign != 1.0:
            out["sign"] = self.sign
        return out


def linear_ramp(slope: float = 1.0, offset: float = 0.0) -> Profile:
    return Profile(kind="linear_ramp", slope=slope, offset=offset)


def radial_ramp(slope: float = 1.0, offset: float = 0.0) -> Profile:
    return Profile(kind="radial_ramp", slope=slope, offset=offset)


def piecewise_ramp(start: float, stop: float, slope: float = 1.0, offset: float = 0.0) -> Profile:
    """Flat up to ``start``, affine on [start, stop], flat afterwards."""
    return Profile(kind="piecewise_ramp", slope=slope, offset=offset, start=start, stop=stop)


def tabulated(nodes: Sequence[float], values: Sequence[float]) -> Profile:
    return Profile(kind="tabulated", nodes=tuple(map(float, nodes)), values=tuple(map(float, values)))


def profile_from_dict(data: Dict[str, Any]) -> Profile:
    kind = data.get("kind")
    if kind in ("linear_ramp", "radial_ramp"):
        profile = Profile(kind=kind, slope=float(data.get("slope", 1.0)), offset=float(data.get("offset", 0.0)))
    elif kind == "piecewise_ramp":
        if "start" not in data or "stop" not in data:
            raise ValidationError("initial.start and initial.stop required for piecewise_ramp")
        profile = piecewise_ramp(float(data["start"]), float(data["stop"]),
                                 float(data.get("slope", 1.0)), float(data.get("offset", 0.0)))
    elif kind == "tabulated":
        profile = tabulated(data.get("nodes", ()), data.get("values", ()))
    else:
        raise ValidationError(f"initial.kind must be one of {PROFILE_KINDS}, got {kind!r}")
    if float(data.get("sign", 1.0)) < 0:
        profile = profile.negated()
    return profile


def check_monotone(profile: Profile, domain: DomainSpec) -> int:
    """Return chi for a profile sampled on the grid, or raise NonMonotone."""
    diffs = np.diff(profile.sample(domain))
    scale = max(1.0, float(np.max(np.abs(profile.sample(domain)))))
    tol = 1e-12 * scale
    if np.all(diffs >= -tol):
        return 1 if np.any(diffs > tol) else 0
    if np.all(diffs <= tol):
        return -1
    raise NonMonotone(f"profile '{profile.kind}' is not monotone on the grid")
