"""Alternating maximization proximal descent for fractional programs."""

from .problem import (
    AmpdaError, DomainError, EvaluationError, FractionalProblem, ObjectiveValue,
    eval_F, eval_F_tilde, eval_c,
)
from .oracles import RecoveryInstance, build_problem
from .solver import SolveResult, SolverConfig, solve
from .data import SyntheticSpec, generate_instance, initial_point, recovery_error
from .diagnostics import CriticalityReport, audit_trace, criticality_measure

__version__ = "0.1.0"
