"""Projected Newton for convex quadratic programs with box constraints.

    minimize 0.5 * x'Hx + g'x   subject to  lower <= x <= upper

Used for the canonical-section problem on a facet (dense, small) and for
the dual of every implicit flow step (sparse tridiagonal).  The iteration
clamps the variables sitting on a bound with the gradient pointing out of
the box, takes a Newton step on the rest and backtracks along the projected
path.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .errors import Infeasible, NotConverged

logger = logging.getLogger(__name__)

STEP_DEC = 0.6      # factor for decreasing the step length
MIN_STEP = 1e-22    # give up the line search below this step
ARMIJO = 0.1        # fraction of the linear decrease required
STALL_FACTOR = 1e4


@dataclass
class BoxQPResult:
    x: np.ndarray
    value: float
    iterations: int
    residual: float
    converged: bool
    message: str


def _value(H, g, x) -> float:
    return float(g @ x + 0.5 * x @ (H @ x))


def projected_residual(x: np.ndarray, grad: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> float:
    """inf-norm of x - P(x - grad); zero exactly at a KKT point."""
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(x - np.clip(x - grad, lower, upper))))


def _solve_free(H, free: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    idx = np.flatnonzero(free)
    if sparse.issparse(H):
        block = H[idx][:, idx].tocsc()
        return np.atleast_1d(splinalg.spsolve(block, rhs))
    block = H[np.ix_(idx, idx)]
    try:
        factor = linalg.cho_factor(block)
    except linalg.LinAlgError as e:
        raise NotConverged(f"Hessian is not positive definite on the free set: {e}")
    return linalg.cho_solve(factor, rhs)


def _backtrack(H, g, x, value, grad, search, lower, upper):
    """Armijo backtracking along the projected path P(x + s search).

    The decrease is measured against grad . (P(x + s search) - x), the slope
    of the path actually taken.  Returns None when no step lowers the value.
    """
    step = 1.0
    while step >= MIN_STEP:
        candidate = np.clip(x + step * search, lower, upper)
        cand_value = _value(H, g, candidate)
        if cand_value < value and cand_value - value <= ARMIJO * float(grad @ (candidate - x)):
            return candidate, cand_value
        step *= STEP_DEC
    return None


def solve_box_qp(H, g, lower, upper, x0=None, tol: float = 1e-12, max_iter: int = 200,
                 raise_on_failure: bool = True) -> BoxQPResult:
    """Minimize 0.5 x'Hx + g'x over the box [lower, upper].

    Args:
        H: positive definite matrix, dense ndarray or scipy.sparse
        g: linear term
        lower, upper: bounds (may be infinite)
        x0: warm start, clipped into the box
        tol: stop when the projected-gradient residual drops below it
        max_iter: Newton iterations before giving up

    Raises:
        Infeasible: if some lower bound exceeds its upper bound.
        NotConverged: after max_iter iterations (unless raise_on_failure is False).
    """
    g = np.asarray(g, dtype=float)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), g.shape).copy()
    upper = np.broadcast_to(np.asarray(upper, dtype=float), g.shape).copy()
    n = g.size
    if np.any(lower > upper):
        raise Infeasible("box has an empty coordinate interval")
    if sparse.issparse(H):
        H = sparse.csr_matrix(H)
    else:
        H = np.asarray(H, dtype=float)

    if x0 is not None and np.shape(x0) == (n,):
        x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    else:
        x = np.clip(np.zeros(n), lower, upper)
    value = _value(H, g, x)

    residual = np.inf
    message = "Maximum main iterations exceeded"
    iterations = 0
    for iterations in range(1, max_iter + 1):
        grad = g + H @ x
        residual = projected_residual(x, grad, lower, upper)
        if residual <= tol:
            message = "Projected gradient smaller than tolerance"
            break

        clamped = ((x <= lower) & (grad > 0)) | ((x >= upper) & (grad < 0))
        free = ~clamped

        # Newton point on the free subspace with the clamped coordinates held
        rhs = -(g + H @ np.where(clamped, x, 0.0))[free]
        search = np.zeros(n)
        search[free] = _solve_free(H, free, rhs) - x[free]

        accepted = None
        if float(search @ grad) < 0:
            accepted = _backtrack(H, g, x, value, grad, search, lower, upper)
        if accepted is None:
            # projected gradient path
            accepted = _backtrack(H, g, x, value, grad, -grad, lower, upper)
        if accepted is None:
            message = "Maximum line-search iterations exceeded"
            break
        x, value = accepted
    else:
        grad = g + H @ x
        residual = projected_residual(x, grad, lower, upper)

    # a stalled line search at roundoff level still counts
    converged = residual <= tol or (message != "Maximum main iterations exceeded" and residual <= STALL_FACTOR * tol)
    logger.debug("box QP: n=%d iterations=%d residual=%.3e (%s)", n, iterations, residual, message)
    if not converged and raise_on_failure:
        raise NotConverged(f"box QP stopped after {iterations} iterations: {message} (residual {residual:.3e})")
    return BoxQPResult(x=x, value=value, iterations=iterations, residual=residual,
                       converged=converged, message=message)
