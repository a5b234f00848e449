"""Criticality measures and audits of solver traces."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .problem import DomainError, FractionalProblem, eval_F
from .solver import IterateState, _q_value

__all__ = [
    "CriticalityReport",
    "scaled_tol",
    "criticality_measure",
    "best_criticality",
    "subgradient_violation",
    "audit_trace",
    "fd_gradient_check",
    "complexity_check",
]

DESCENT_TOL = 1e-10


def scaled_tol(ref: float, tol: float = DESCENT_TOL) -> float:
    return tol * (1.0 + abs(ref))


@dataclass
class CriticalityReport:
    eps_measure: float = 0.0
    alpha_used: float = 1.0
    descent_violations: int = 0
    fenchel_residual_g: float = 0.0
    fenchel_residual_h2: float = 0.0
    grad_check_relerr: float = 0.0
    f_violations: int = 0
    q_violations: int = 0
    steps_audited: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def criticality_measure(problem: FractionalProblem, x, alpha: float) -> float:
    """Distance from ``x`` to its own prox-gradient image at stepsize ``alpha``.

    Zero exactly at critical points; the prox is single valued for the
    shipped oracles, so the distance is a plain norm.
    """
    x = problem.check_point(x)
    if not problem.feasible(x):
        raise DomainError("criticality is only defined on the feasible set")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    f = float(problem.eval_f(x))
    c = 1.0 / float(problem.eval_g(x))
    y = problem.subgrad_g(x)
    z = problem.subgrad_h2(x)
    direction = problem.grad_h1(x) - z - (c * c * f) * y
    p = problem.prox_fC(x - alpha * direction, alpha * c)
    return float(np.linalg.norm(x - p))


def best_criticality(problem, x, alpha_final: Optional[float]):
    """Minimum of the measure over ``alpha in {alpha_final, 1}``; returns ``(eps, alpha)``."""
    candidates = [1.0] if alpha_final is None else [alpha_final, 1.0]
    vals = [(criticality_measure(problem, x, a), a) for a in candidates]
    return min(vals, key=lambda t: t[0])


def subgradient_violation(func, x, s, samples) -> float:
    """``max(0, func(x) + <s, p - x> - func(p))`` over sample points ``p``,
    scaled by ``1 + |func(x)|``."""
    fx = float(func(x))
    worst = 0.0
    for p in samples:
        gap = fx + float(np.dot(s, p - x)) - float(func(p))
        worst = max(worst, gap)
    return worst / (1.0 + abs(fx))


def _sample_points(x, rng, count):
    scale = 1.0 + float(np.abs(x).max())
    out = []
    for i in range(count):
        if i % 2:
            out.append(scale * rng.standard_normal(x.size))
        else:
            out.append(x + 1e-2 * scale * rng.standard_normal(x.size))
    return out


def _fenchel_residual_g(problem, x, y, g):
    # for a norm, y in dg(x) iff <x, y> = g(x) and dual_norm(y) <= 1
    gap = abs(float(np.dot(x, y)) - g) / (1.0 + abs(g))
    if problem.dual_norm_g is not None:
        return max(gap, float(problem.dual_norm_g(y)) - 1.0, 0.0)
    return gap


def audit_trace(problem: FractionalProblem, trace: Sequence[IterateState], sigma: float,
                *, samples: int = 8, seed: int = 0) -> CriticalityReport:
    """Re-check a solver trace.

    ``descent_violations`` counts steps breaking either
    ``F(x+) + sigma/2 ||dx||^2 <= F(x)`` (tallied in ``f_violations``) or
    the sandwich ``F(x+) <= Q <= F(x) - sigma/2 ||dx||^2`` (``q_violations``).
    When the trace carries vectors, F and Q are recomputed from the iterates rather than trusted, and the
    subgradient selections are tested: exactly for ``g`` (Fenchel-Young plus
    dual feasibility), by sampled subgradient inequalities for ``h2``.
    """
    if not trace:
        raise ValueError("empty trace")
    rng = np.random.default_rng(seed)
    has_vectors = trace[0].x is not None

    def objective(s):
        if not has_vectors:
            return s.F_val
        val = eval_F(problem, s.x)
        return math.inf if val.infinite else val.value

    F = [objective(s) for s in trace]
    rep = CriticalityReport()
    for k in range(len(trace) - 1):
        cur, nxt = trace[k], trace[k + 1]
        if has_vectors:
            step = float(np.linalg.norm(nxt.x - cur.x))
        else:
            step = cur.step_norm if cur.step_norm is not None else 0.0
        pen = 0.5 * sigma * step * step
        tol = scaled_tol(F[k])
        rep.steps_audited += 1
        f_bad = not (F[k + 1] + pen <= F[k] + tol)
        if has_vectors and math.isfinite(F[k + 1]):
            q = _q_value(float(problem.eval_f(nxt.x)), float(problem.eval_g(nxt.x)),
                         float(problem.eval_h1(nxt.x)), nxt.x, cur)
        else:
            q = cur.q_next
        q_bad = q is None or not (F[k + 1] <= q + tol and q + pen <= F[k] + tol)
        rep.f_violations += f_bad
        rep.q_violations += q_bad
        rep.descent_violations += f_bad or q_bad

    if has_vectors:
        rg = rh = 0.0
        for s in trace:
            rg = max(rg, _fenchel_residual_g(problem, s.x, s.y, float(problem.eval_g(s.x))))
            pts = _sample_points(s.x, rng, samples)
            rh = max(rh, subgradient_violation(problem.eval_h2, s.x, s.z, pts))
        rep.fenchel_residual_g = rg
        rep.fenchel_residual_h2 = rh
        last = trace[-1]
        alpha = next((s.alpha_accepted for s in reversed(trace)
                      if s.alpha_accepted is not None), None)
        rep.eps_measure, rep.alpha_used = best_criticality(problem, last.x, alpha)
    return rep


def fd_gradient_check(problem: FractionalProblem, x, step: float = 1e-5) -> float:
    """Largest relative error between ``grad_h1`` and central differences of ``eval_h1``.

    Errors are relative to ``1 + ||grad||_inf`` so coordinates with a tiny
    partial derivative do not blow up the ratio.
    """
    x = problem.check_point(x)
    grad = np.asarray(problem.grad_h1(x), dtype=float)
    scale = 1.0 + float(np.abs(grad).max(initial=0.0))
    e = np.zeros_like(x)
    worst = 0.0
    for i in range(x.size):
        e[i] = step
        fd = (float(problem.eval_h1(x + e)) - float(problem.eval_h1(x - e))) / (2 * step)
        e[i] = 0.0
        worst = max(worst, abs(fd - grad[i]) / scale)
    return worst


def complexity_check(trace: Sequence[IterateState], sigma: float, eps: float):
    """A-posteriori check of the ``O(1/eps^2)`` iteration bound.

    The residual at ``x^k`` with stepsize ``alpha_k`` is ``||x^{k+1} - x^k||``,
    so the first eps-critical index is read off the step norms. The final
    objective stands in for the unknown limit value. Returns
    ``(k_hat, bound, ok)``; ``k_hat`` is ``None`` if no step is small enough.
    """
    F0, Finf = trace[0].F_val, trace[-1].F_val
    bound = 2.0 * (F0 - Finf) / (sigma * eps * eps)
    k_hat = next((s.k for s in trace if s.step_norm is not None and s.step_norm <= eps), None)
    return k_hat, bound, k_hat is None or k_hat <= bound
