"""Alternating maximization proximal descent (AMPDA).

Each iteration maximizes the min-max objective in its scalar variable
(``c = 1/g(x)``), then takes one proximal step on a majorizing surrogate in
``x``. The step is accepted by a backtracking search on the auxiliary merit
function ``Q``, which is evaluated without any conjugate functions.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .problem import DomainError, FractionalProblem, eval_F

__all__ = [
    "SolverConfig",
    "IterateState",
    "SolveResult",
    "CONVERGED",
    "MAX_ITERS",
    "LINE_SEARCH_FAILURE",
    "INVALID_START",
    "LineSearchFailure",
    "bb_trial_stepsize",
    "make_state",
    "proximal_step",
    "q_linesearch_value",
    "line_search",
    "solve",
]

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max_iters"
LINE_SEARCH_FAILURE = "line_search_failure"
INVALID_START = "invalid_start"


@dataclass(frozen=True)
class SolverConfig:
    alpha_min: float = 1e-4
    alpha_max: float = 1e4
    sigma: float = 1e-5
    gamma: float = 0.5
    term_tol: float = 1e-6
    max_iters: int = 100_000
    max_backtracks: int = 200
    criticality_eps: float = 1e-4

    def __post_init__(self):
        if not 0 < self.alpha_min <= self.alpha_max:
            raise ValueError("need 0 < alpha_min <= alpha_max")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        for name in ("sigma", "term_tol", "criticality_eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1 or self.max_backtracks < 1:
            raise ValueError("iteration caps must be positive")


@dataclass
class IterateState:
    """Quantities at ``x^k`` plus the step taken from it.

    The step fields (``alpha_*``, ``backtracks``, ``step_norm``, ``q_next``)
    stay ``None`` on the last recorded state. Vectors are dropped from the
    trace unless the solve was asked to keep them.
    """

    k: int
    x: Optional[np.ndarray]
    c: float
    y: Optional[np.ndarray]
    z: Optional[np.ndarray]
    grad_h1: Optional[np.ndarray]
    f_val: float
    g_val: float
    h1_val: float
    h2_val: float
    F_val: float
    alpha_trial: Optional[float] = None
    alpha_accepted: Optional[float] = None
    backtracks: Optional[int] = None
    step_norm: Optional[float] = None
    q_next: Optional[float] = None
    elapsed: float = 0.0

    def scalars_only(self) -> "IterateState":
        return replace(self, x=None, y=None, z=None, grad_h1=None)


@dataclass
class SolveResult:
    final_x: np.ndarray
    final_F: float
    iterations: int
    status: str
    trace: List[IterateState] = field(default_factory=list)
    wall_time: float = 0.0
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def total_backtracks(self) -> int:
        return sum(s.backtracks or 0 for s in self.trace)


class LineSearchFailure(RuntimeError):
    pass


def bb_trial_stepsize(dx, dgrad, alpha_min: float, alpha_max: float) -> float:
    """Clamped Barzilai-Borwein stepsize ``||dx||^2 / |<dx, dgrad>|``.

    Returns 1 when there is no previous step or the denominator vanishes.
    """
    if dx is None or dgrad is None:
        return 1.0
    denom = abs(float(np.dot(dx, dgrad)))
    if denom == 0.0:
        return 1.0
    return max(alpha_min, min(alpha_max, float(np.dot(dx, dx)) / denom))


def make_state(problem: FractionalProblem, x, k: int = 0) -> IterateState:
    """Evaluate every oracle the iteration needs at a feasible ``x``."""
    x = problem.check_point(x)
    val = eval_F(problem, x)
    if val.infinite:
        raise DomainError("point is outside dom(F)")
    f, g = val.numerator, val.denominator
    h1 = float(problem.eval_h1(x))
    h2 = float(problem.eval_h2(x))
    return IterateState(
        k=k, x=x, c=1.0 / g,
        y=np.asarray(problem.subgrad_g(x), dtype=float),
        z=np.asarray(problem.subgrad_h2(x), dtype=float),
        grad_h1=np.asarray(problem.grad_h1(x), dtype=float),
        f_val=f, g_val=g, h1_val=h1, h2_val=h2, F_val=val.value,
    )


def proximal_step(problem: FractionalProblem, state: IterateState, alpha: float) -> np.ndarray:
    """Prox-gradient step on the surrogate of ``F~(., c_k)`` with stepsize ``alpha``."""
    if not alpha > 0:
        raise ValueError("stepsize must be positive")
    c = state.c
    direction = state.grad_h1 - state.z - (c * c * state.f_val) * state.y
    return np.asarray(problem.prox_fC(state.x - alpha * direction, alpha * c), dtype=float)


def _q_value(f_hat, g_hat, h1_hat, x_hat, state):
    r = f_hat / (g_hat * g_hat)
    d = state.x - x_hat
    return (r * (2.0 * g_hat - state.g_val) + h1_hat - state.h2_val
            + float(np.dot(d, state.z)) + r * float(np.dot(d, state.y)))


def q_linesearch_value(problem: FractionalProblem, x_hat, state: IterateState) -> float:
    """``Q(x_hat, y^k, z^k, 1/g(x_hat))`` via the Fenchel-Young identities at ``x^k``."""
    x_hat = problem.check_point(x_hat)
    if not problem.in_omega(x_hat):
        raise DomainError("g(x_hat) = 0")
    f_hat = float(problem.eval_f(x_hat))
    g_hat = float(problem.eval_g(x_hat))
    h1_hat = float(problem.eval_h1(x_hat))
    return _q_value(f_hat, g_hat, h1_hat, x_hat, state)


def line_search(problem: FractionalProblem, state: IterateState, config: SolverConfig):
    """Backtrack from ``state.alpha_trial`` until the Q-descent test holds.

    Returns ``(x_next, alpha, backtracks, q_value)``. Raises
    :class:`LineSearchFailure` after ``config.max_backtracks`` rejections.
    """
    alpha = state.alpha_trial if state.alpha_trial is not None else 1.0
    half_sigma = 0.5 * config.sigma
    for backtracks in range(config.max_backtracks + 1):
        x_hat = proximal_step(problem, state, alpha)
        # in_C holds by construction of the prox
        if problem.in_omega(x_hat):
            f_hat = float(problem.eval_f(x_hat))
            g_hat = float(problem.eval_g(x_hat))
            h1_hat = float(problem.eval_h1(x_hat))
            q = _q_value(f_hat, g_hat, h1_hat, x_hat, state)
            d = x_hat - state.x
            if q + half_sigma * float(np.dot(d, d)) <= state.F_val:
                return x_hat, alpha, backtracks, q
        alpha *= config.gamma
    raise LineSearchFailure(
        f"no acceptable step after {config.max_backtracks} backtracks at k={state.k}")


def solve(problem: FractionalProblem, x0, config: SolverConfig = None, *,
          keep_vectors: bool = False, callback=None) -> SolveResult:
    """Run AMPDA from ``x0``.

    Stops when ``||x^k - x^{k-1}|| / ||x^k|| < config.term_tol`` or after
    ``config.max_iters`` steps. A line-search breakdown ends the run with the
    last accepted iterate instead of raising.

    ``keep_vectors`` stores x, y, z and the gradient in every trace entry;
    otherwise only scalars are kept. ``callback(state)`` is called on each
    new iterate.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    x0 = problem.check_point(x0).copy()
    if eval_F(problem, x0).infinite:
        return SolveResult(x0, math.inf, 0, INVALID_START, [], time.perf_counter() - t0,
                           "x0 is outside dom(F)")

    state = make_state(problem, x0, 0)
    state.alpha_trial = 1.0
    trace: List[IterateState] = []
    status, message = MAX_ITERS, ""

    def record(s):
        trace.append(s if keep_vectors else s.scalars_only())

    for k in range(config.max_iters):
        if callback is not None:
            callback(state)
        try:
            x_next, alpha, nback, q = line_search(problem, state, config)
        except LineSearchFailure as exc:
            status, message = LINE_SEARCH_FAILURE, str(exc)
            log.warning("%s", exc)
            break
        step = float(np.linalg.norm(x_next - state.x))
        state.alpha_accepted = alpha
        state.backtracks = nback
        state.step_norm = step
        state.q_next = q
        state.elapsed = time.perf_counter() - t0
        record(state)

        prev = state
        state = make_state(problem, x_next, k + 1)
        state.alpha_trial = bb_trial_stepsize(
            state.x - prev.x, state.grad_h1 - prev.grad_h1, config.alpha_min, config.alpha_max)

        xnorm = float(np.linalg.norm(state.x))
        # the guard keeps a vanishing denominator from counting as convergence
        if xnorm > 1e-300 and step / xnorm < config.term_tol:
            status = CONVERGED
            break

    state.alpha_trial = None
    state.elapsed = time.perf_counter() - t0
    if callback is not None and status != LINE_SEARCH_FAILURE:
        callback(state)
    record(state)
    return SolveResult(
        final_x=state.x, final_F=state.F_val, iterations=state.k, status=status,
        trace=trace, wall_time=time.perf_counter() - t0, message=message)
