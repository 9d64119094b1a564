"""Total variation flow with a dynamic boundary condition: facets, detachment and a flow solver."""
__version__ = "0.1.0"

from .cahn_hoffman import classify_annulus_cell, classify_facet, onset_report
from .errors import FacetFlowError
from .facet_dynamics import Trajectory, boundary_onset, detect_events, evolve_1d, evolve_annulus, evolve_ball
from .geometry import DomainSpec, FacetSpec, make_domain
from .pde_solver import compare_exact, run_flow, step_implicit
from .states_energy import FlowConfig, State, energy_E, trace_state

from . import agent
