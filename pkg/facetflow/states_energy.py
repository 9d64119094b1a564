"""States U = (u, v), the energy E, its regularization E_eps and the tau-product.

u lives on the grid nodes of a DomainSpec and v on its Gamma nodes.  The
trace gamma u is the value at the Gamma node itself, so the boundary gap
v - gamma u is a plain difference.
"""
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .errors import ConfigError, DimensionMismatch, InvalidParam
from .geometry import DomainSpec

# distinguished value for states outside the domain of E_eps
INFINITE_ENERGY = math.inf

TRACE_TOL = 1e-12


@dataclass(frozen=True)
class State:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise DimensionMismatch("state entries must be finite")

    def scaled(self, alpha: float) -> "State":
        return State(alpha * self.u, alpha * self.v)

    def shifted(self, c: float) -> "State":
        return State(self.u + c, self.v + c)

    def to_dict(self) -> Dict[str, Any]:
        return {"u": self.u.tolist(), "v": self.v.tolist()}


def trace_state(domain: DomainSpec, u: np.ndarray) -> State:
    """The state (u, gamma u) with a matching boundary layer."""
    u = np.asarray(u, dtype=float)
    return State(u, u[domain.gamma_nodes].copy())


def check_state(state: State, domain: DomainSpec) -> None:
    if state.u.shape != (domain.n,):
        raise DimensionMismatch(f"u has shape {state.u.shape}, the grid has {domain.n} nodes")
    if state.v.shape != (len(domain.gamma),):
        raise DimensionMismatch(f"v has shape {state.v.shape}, Gamma has {len(domain.gamma)} nodes")


def trace_gap(state: State, domain: DomainSpec) -> np.ndarray:
    """v - gamma u at every Gamma node."""
    check_state(state, domain)
    return state.v - state.u[domain.gamma_nodes]


@dataclass(frozen=True)
class FlowConfig:
    """Parameters of a gradient-flow run.

    eps == 0 selects the nonsmooth energy E, eps > 0 its regularization.
    dt left unset defaults to h / 4 of the domain the run is on; see resolve().
    """
    tau: float = 1.0
    eps: float = 0.0
    dt: Optional[float] = None
    T: float = 0.2
    tol: float = 1e-10
    max_iter: int = 500
    solver: str = "active_set"
    check_energy: bool = True

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if not self.eps >= 0:
            raise ConfigError(f"eps must be non-negative, got {self.eps}")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.T > 0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigError(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.solver not in ("active_set", "pdhg"):
            raise ConfigError(f"unknown solver '{self.solver}'")

    @property
    def steps(self) -> int:
        if self.dt is None:
            raise ConfigError("dt is unset; resolve the config against a domain first")
        return int(math.ceil(self.T / self.dt - 1e-9))

    def resolve(self, domain: DomainSpec) -> "FlowConfig":
        """This config with an unset dt replaced by h / 4 of ``domain``."""
        return self if self.dt is not None else replace(self, dt=domain.h / 4.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tau": self.tau, "eps": self.eps, "dt": self.dt, "T": self.T,
            "tol": self.tol, "max_iter": self.max_iter, "solver": self.solver,
            "check_energy": self.check_energy,
        }


def total_variation(u: np.ndarray, domain: DomainSpec) -> float:
    return float(np.sum(domain.edge_weights * np.abs(np.diff(u))))


def energy_E(state: State, domain: DomainSpec) -> float:
    """Discrete E(u, v): weighted TV of u plus the Gamma mismatch."""
    check_state(state, domain)
    mismatch = np.abs(state.u[domain.gamma_nodes] - state.v)
    return total_variation(state.u, domain) + float(np.sum(domain.gamma_weights * mismatch))


def energy_E_eps(state: State, eps: float, domain: DomainSpec) -> float:
    """Regularized energy; +inf unless v = gamma u on Gamma."""
    if not eps > 0:
        raise InvalidParam(f"eps must be positive, got {eps}")
    check_state(state, domain)
    scale = max(1.0, float(np.max(np.abs(state.u))))
    if np.any(np.abs(state.u[domain.gamma_nodes] - state.v) > TRACE_TOL * scale):
        return INFINITE_ENERGY
    h = domain.h
    grad = np.diff(state.u) / h
    cells = domain.edge_weights * h
    return float(np.sum(cells * np.sqrt(grad ** 2 + eps ** 2)) + 0.5 * eps ** 2 * np.sum(cells * grad ** 2))


def inner_tau(U1: State, U2: State, tau: float, domain: DomainSpec) -> float:
    """(U1, U2)_tau = int u1 u2 + tau int_Gamma v1 v2."""
    if not tau > 0:
        raise InvalidParam(f"tau must be positive, got {tau}")
    check_state(U1, domain)
    check_state(U2, domain)
    bulk = float(np.sum(domain.node_masses * U1.u * U2.u))
    return bulk + tau * float(np.sum(domain.gamma_weights * U1.v * U2.v))


def norm_tau(U: State, tau: float, domain: DomainSpec) -> float:
    return math.sqrt(max(inner_tau(U, U, tau, domain), 0.0))


def difference(U1: State, U2: State) -> State:
    if U1.u.shape != U2.u.shape or U1.v.shape != U2.v.shape:
        raise DimensionMismatch("states have different shapes")
    return State(U1.u - U2.u, U1.v - U2.v)


def lattice_sup_inf(U1: State, U2: State) -> Tuple[State, State]:
    """Componentwise (U1 v U2, U1 ^ U2)."""
    if U1.u.shape != U2.u.shape or U1.v.shape != U2.v.shape:
        raise DimensionMismatch("states have different shapes")
    sup = State(np.maximum(U1.u, U2.u), np.maximum(U1.v, U2.v))
    inf = State(np.minimum(U1.u, U2.u), np.minimum(U1.v, U2.v))
    return sup, inf


def is_ordered(lower: State, upper: State, tol: float = 0.0) -> bool:
    return bool(np.all(lower.u <= upper.u + tol) and np.all(lower.v <= upper.v + tol))
