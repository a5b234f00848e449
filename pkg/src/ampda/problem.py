"""Fractional program interface and the extended objective.

A problem instance is a bundle of oracles for

    min  f(x)/g(x) + h1(x) - h2(x)   subject to  g(x) != 0,  x in C

with ``f, g >= 0``, ``g`` and ``h2`` convex, ``h1`` smooth, and a computable
proximal map of ``f + indicator(C)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "AmpdaError",
    "DomainError",
    "EvaluationError",
    "ObjectiveValue",
    "FractionalProblem",
    "eval_F",
    "eval_c",
    "eval_F_tilde",
]


class AmpdaError(Exception):
    """Base class for errors raised by this package."""


class DomainError(AmpdaError, ValueError):
    """A point lies outside the set where an operation is defined."""


class EvaluationError(AmpdaError, ArithmeticError):
    """An oracle returned a non-finite value."""

    def __init__(self, oracle, value):
        self.oracle = oracle
        self.value = value
        super().__init__(f"oracle {oracle!r} returned non-finite output {value!r}")


class InfiniteValueError(AmpdaError, ArithmeticError):
    """Arithmetic was attempted on a +inf objective value."""


@dataclass(frozen=True)
class ObjectiveValue:
    """Extended-real objective value.

    Infeasible points carry ``infinite=True``. Reading :attr:`value` (or
    converting to ``float``) on such an instance raises, so an infeasible
    evaluation can never leak into arithmetic as a sentinel.
    """

    infinite: bool
    _value: float = 0.0
    numerator: float = math.nan
    denominator: float = math.nan
    smooth_part: float = math.nan

    @classmethod
    def inf(cls) -> "ObjectiveValue":
        return cls(infinite=True)

    @property
    def finite(self) -> bool:
        return not self.infinite

    @property
    def value(self) -> float:
        if self.infinite:
            raise InfiniteValueError("objective is +inf at this point")
        return self._value

    def __float__(self) -> float:
        return self.value

    def __repr__(self):
        if self.infinite:
            return "ObjectiveValue(+inf)"
        return f"ObjectiveValue({self._value!r})"


@dataclass(frozen=True)
class FractionalProblem:
    """Oracle bundle for one fractional program.

    All oracles are total functions on R^n; infeasibility is reported only
    through :attr:`in_omega` and :attr:`in_C`.

    ``prox_fC(v, w)`` returns ``argmin_p  w*f(p) + 0.5*||p - v||^2`` over C.
    ``dual_norm_g`` is optional; when ``g`` is a norm it returns the dual norm,
    which lets diagnostics certify ``y in dg(x)`` exactly.
    """

    eval_f: Callable[[np.ndarray], float]
    eval_g: Callable[[np.ndarray], float]
    subgrad_g: Callable[[np.ndarray], np.ndarray]
    eval_h1: Callable[[np.ndarray], float]
    grad_h1: Callable[[np.ndarray], np.ndarray]
    eval_h2: Callable[[np.ndarray], float]
    subgrad_h2: Callable[[np.ndarray], np.ndarray]
    prox_fC: Callable[[np.ndarray, float], np.ndarray]
    in_omega: Callable[[np.ndarray], bool]
    in_C: Callable[[np.ndarray], bool]
    dimension: int
    dual_norm_g: Optional[Callable[[np.ndarray], float]] = None
    name: str = "fractional"

    def __post_init__(self):
        if int(self.dimension) <= 0:
            raise ValueError("dimension must be a positive integer")

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(
                f"point has shape {x.shape}, expected ({self.dimension},)")
        return x

    def feasible(self, x) -> bool:
        return bool(self.in_C(x)) and bool(self.in_omega(x))


def _checked(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise EvaluationError(name, value)
    return value


def eval_F(problem: FractionalProblem, x) -> ObjectiveValue:
    """Extended objective: ``f/g + h1 - h2`` on the feasible set, +inf elsewhere."""
    x = problem.check_point(x)
    if not problem.feasible(x):
        return ObjectiveValue.inf()
    f = _checked("eval_f", problem.eval_f(x))
    g = _checked("eval_g", problem.eval_g(x))
    h1 = _checked("eval_h1", problem.eval_h1(x))
    h2 = _checked("eval_h2", problem.eval_h2(x))
    smooth = h1 - h2
    return ObjectiveValue(False, f / g + smooth, f, g, smooth)


def eval_c(problem: FractionalProblem, x) -> float:
    """The maximizer ``1/g(x)`` of the min-max objective in its scalar variable."""
    x = problem.check_point(x)
    if not problem.in_omega(x):
        raise DomainError("g(x) = 0: point is outside Omega")
    return 1.0 / _checked("eval_g", problem.eval_g(x))


def eval_F_tilde(problem: FractionalProblem, x, c: float) -> ObjectiveValue:
    """Min-max objective ``2c f - c^2 f g + h1 - h2`` (+inf off the feasible set)."""
    x = problem.check_point(x)
    if not problem.feasible(x):
        return ObjectiveValue.inf()
    f = _checked("eval_f", problem.eval_f(x))
    g = _checked("eval_g", problem.eval_g(x))
    h1 = _checked("eval_h1", problem.eval_h1(x))
    h2 = _checked("eval_h2", problem.eval_h2(x))
    smooth = h1 - h2
    return ObjectiveValue(False, 2.0 * c * f - c * c * f * g + smooth, f, g, smooth)
