"""Automatic convergence control: ESS computation and the bisection that
chooses each temperature increment.

The increment is the largest step that still keeps a target fraction kappa
of the population effective, capped at 1/min_iterations per step; the run
terminates when lambda reaches 1.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Sequence

import numpy as np

from .core import AnnealState

__all__ = [
    "EmptyPopulation",
    "AlreadyTerminated",
    "NonIncreasingLambda",
    "ess",
    "next_lambda",
    "advance",
]

BISECTION_TOL = 1e-6
MAX_BISECTIONS = 60


class EmptyPopulation(ValueError):
    pass


class AlreadyTerminated(RuntimeError):
    pass


class NonIncreasingLambda(ValueError):
    pass


def ess(rewards: Sequence[float], lambda_prev: float, lambda_: float, beta: float) -> float:
    """Effective sample size (sum u)^2 / sum u^2 of the incremental weights
    u_n = exp((lambda - lambda_prev) * beta * R_n), computed in log space."""
    if len(rewards) == 0:
        raise EmptyPopulation("ess needs a non-empty population")
    if lambda_ < lambda_prev:
        raise ValueError("lambda must be >= lambda_prev")
    log_u = (lambda_ - lambda_prev) * beta * np.asarray(rewards, dtype=float)
    log_u -= log_u.max()  # shift by the maximum before exponentiation
    u = np.exp(log_u)
    return float(u.sum() ** 2 / np.square(u).sum())


def next_lambda(
    rewards: Sequence[float],
    state: AnnealState,
    kappa: float,
    min_iterations: int,
    tol: float = BISECTION_TOL,
) -> float:
    """Largest lambda in (lambda_prev, min(1, lambda_prev + 1/min_iterations)]
    keeping ESS >= kappa*N, found by bisection to absolute tolerance `tol`."""
    if state.terminated:
        raise AlreadyTerminated("schedule already reached lambda = 1")
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must be in (0, 1)")
    n = len(rewards)
    if n == 0:
        raise EmptyPopulation("next_lambda needs a non-empty population")

    lam_prev = state.lambda_
    threshold = kappa * n
    cap = min(1.0, lam_prev + 1.0 / min_iterations)
    # Snap to the endpoint when accumulated 1/min_iterations steps land a
    # rounding error short of 1, so min_iterations equal steps suffice.
    if cap >= 1.0 - 1e-9:
        cap = 1.0

    if ess(rewards, lam_prev, cap, state.beta_target) >= threshold:
        return cap

    # ESS is non-increasing in lambda over the increment, so the crossing is
    # bracketed by [lam_prev, cap]: ESS(lam_prev) = N >= kappa*N by definition.
    lo, hi = lam_prev, cap
    for _ in range(MAX_BISECTIONS):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if ess(rewards, lam_prev, mid, state.beta_target) >= threshold:
            lo = mid
        else:
            hi = mid
    # lo is the largest bracketed value still satisfying the constraint; fall
    # back to hi when the crossing sits within tol of lam_prev so the schedule
    # always strictly advances.
    return lo if lo > lam_prev else hi


def advance(state: AnnealState, new_lambda: float) -> AnnealState:
    """Move the schedule to `new_lambda`, incrementing the iteration counter.
    Termination holds exactly when the new lambda is 1."""
    if new_lambda <= state.lambda_:
        raise NonIncreasingLambda(f"lambda must strictly increase: {state.lambda_} -> {new_lambda}")
    if new_lambda > 1.0:
        raise ValueError("lambda cannot exceed 1")
    return replace(
        state,
        lambda_=new_lambda,
        iteration=state.iteration + 1,
        terminated=(new_lambda == 1.0),
    )
