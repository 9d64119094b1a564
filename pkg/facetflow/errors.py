"""Exceptions raised by the facetflow library.

Library code raises these; the CLI turns them into exit codes and the agent
tools turn them into ``"Error: ..."`` strings.
"""


class FacetFlowError(Exception):
    """Base class for every error raised by facetflow."""


class InvalidGeometry(FacetFlowError):
    pass


class InvalidFacet(FacetFlowError):
    pass


class DimensionMismatch(FacetFlowError):
    pass


class DomainMismatch(FacetFlowError):
    pass


class GridMismatch(FacetFlowError):
    pass


class InvalidParam(FacetFlowError):
    pass


class Degenerate(FacetFlowError):
    pass


class Infeasible(FacetFlowError):
    pass


class NotConverged(FacetFlowError):
    pass


class NonMonotone(FacetFlowError):
    pass


class StepTooLarge(FacetFlowError):
    pass


class InvalidInit(FacetFlowError):
    pass


class ConfigError(FacetFlowError):
    pass


class ParseError(FacetFlowError):
    pass


class ValidationError(FacetFlowError):
    pass


class EnergyIncrease(FacetFlowError):
    """A discrete energy went up between two steps of a run."""
