"""Closed-form oracles for the L1/L2 and L1/top-K robust recovery models.

Both models share

    f(x)  = ||x||_1
    h1(x) = lam/2 * ||Ax - b||^2
    h2(x) = lam/2 * ||T_mu(Ax - b)||^2
    C     = {lower <= x <= upper}

and differ in the denominator: ``g = ||x||_2`` or ``g = ||x||_(K)``, the sum
of the K largest magnitudes. Note ``h1 - h2 = lam/2 * dist^2(Ax - b, S_mu)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .problem import DomainError, FractionalProblem

__all__ = [
    "L1_OVER_L2",
    "L1_OVER_TOPK",
    "RecoveryInstance",
    "top_indices",
    "l1_norm",
    "l2_norm_subgrad",
    "topk_norm",
    "topk_norm_subgrad",
    "topk_dual_norm",
    "truncate_mu",
    "dist2_sparse",
    "h_oracles",
    "soft_threshold",
    "prox_weighted_l1_box",
    "build_problem",
]

L1_OVER_L2 = "l1l2"
L1_OVER_TOPK = "l1sk"
VARIANTS = (L1_OVER_L2, L1_OVER_TOPK)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RecoveryInstance:
    """Data of one robust recovery model. Arrays are copied and made read-only."""

    A: np.ndarray
    b: np.ndarray
    lam: float
    mu: int
    lower: np.ndarray
    upper: np.ndarray
    K: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        A = _frozen(self.A)
        if A.ndim != 2:
            raise ValueError("A must be a 2-d matrix")
        m, n = A.shape
        b = _frozen(self.b).reshape(-1)
        lower = _frozen(np.broadcast_to(self.lower, (n,)))
        upper = _frozen(np.broadcast_to(self.upper, (n,)))
        if b.shape != (m,):
            raise ValueError(f"b has length {b.size}, expected {m}")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        mu = int(self.mu)
        if not 0 <= mu <= m:
            raise ValueError(f"mu={mu} outside [0, {m}]")
        if np.any(lower > upper):
            raise ValueError("lower > upper in some component")
        K = self.K
        if K is not None:
            K = int(K)
            if not 1 <= K <= n:
                raise ValueError(f"K={K} outside [1, {n}]")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


def top_indices(a, k: int) -> np.ndarray:
    """Indices of the ``k`` largest entries of ``|a|``, ties to the lowest index.

    Returned in increasing index order. Uses a partial selection for the
    threshold, so the cost is linear in ``len(a)`` on average.
    """
    mag = np.abs(np.asarray(a, dtype=float))
    n = mag.size
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    if k == 0:
        return np.empty(0, dtype=np.intp)
    if k == n:
        return np.arange(n)
    thresh = np.partition(mag, n - k)[n - k]
    above = np.flatnonzero(mag > thresh)
    at = np.flatnonzero(mag == thresh)[: k - above.size]
    return np.sort(np.concatenate([above, at]))


def l1_norm(x) -> float:
    return float(np.abs(x).sum())


def l2_norm_subgrad(x):
    """Return ``(||x||_2, x/||x||_2)``; undefined at zero."""
    x = np.asarray(x, dtype=float)
    nrm = float(np.linalg.norm(x))
    if nrm == 0.0:
        raise DomainError("L2 subgradient requested at x = 0")
    return nrm, x / nrm


def topk_norm(x, K: int) -> float:
    x = np.asarray(x, dtype=float)
    if not 1 <= K <= x.size:
        raise ValueError(f"K={K} outside [1, {x.size}]")
    return float(np.abs(x[top_indices(x, K)]).sum())


def topk_norm_subgrad(x, K: int):
    """Return ``(||x||_(K), y)`` with ``y`` a subgradient of the top-K norm.

    ``y`` is ``sign(x_i)`` on the selected indices and zero elsewhere; a zero
    entry that has to be selected to reach K indices gets ``+1``.
    """
    x = np.asarray(x, dtype=float)
    if not 1 <= K <= x.size:
        raise ValueError(f"K={K} outside [1, {x.size}]")
    idx = top_indices(x, K)
    y = np.zeros_like(x)
    s = np.sign(x[idx])
    s[s == 0] = 1.0
    y[idx] = s
    return float(np.abs(x[idx]).sum()), y


def topk_dual_norm(y, K: int) -> float:
    """Dual norm of the top-K norm: ``max(||y||_inf, ||y||_1 / K)``."""
    y = np.abs(np.asarray(y, dtype=float))
    if y.size == 0:
        return 0.0
    return float(max(y.max(), y.sum() / K))


def truncate_mu(z, mu: int) -> np.ndarray:
    """Keep the ``mu`` largest-magnitude entries of ``z``, zero the rest."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    idx = top_indices(z, mu)
    out[idx] = z[idx]
    return out


def dist2_sparse(z, mu: int) -> float:
    """Squared distance from ``z`` to the set of ``mu``-sparse vectors."""
    z = np.asarray(z, dtype=float)
    mask = np.ones(z.size, dtype=bool)
    mask[top_indices(z, mu)] = False
    return float(np.dot(z[mask], z[mask]))


def h_oracles(instance: RecoveryInstance, x):
    """Return ``(h1, grad_h1, h2, subgrad_h2)`` at ``x`` from one residual."""
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.n,):
        raise ValueError(f"x has shape {x.shape}, expected ({instance.n},)")
    lam, A = instance.lam, instance.A
    r = A @ x - instance.b
    tr = truncate_mu(r, instance.mu)
    h1 = 0.5 * lam * float(r @ r)
    h2 = 0.5 * lam * float(tr @ tr)
    return h1, lam * (A.T @ r), h2, lam * (A.T @ tr)


def soft_threshold(v, w):
    return np.sign(v) * np.maximum(np.abs(v) - w, 0.0)


def prox_weighted_l1_box(v, w: float, lower, upper) -> np.ndarray:
    """``argmin_z  w*||z||_1 + 0.5*||z - v||^2`` over ``lower <= z <= upper``.

    Both terms are separable and convex, so soft-thresholding followed by a
    componentwise clamp is exact.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise ValueError("lower > upper in some component")
    if w < 0:
        raise ValueError("prox weight must be nonnegative")
    return np.clip(soft_threshold(np.asarray(v, dtype=float), w), lower, upper)


def build_problem(instance: RecoveryInstance, variant: str) -> FractionalProblem:
    """Wire a :class:`RecoveryInstance` into a :class:`FractionalProblem`."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    A, b, lam, mu = instance.A, instance.b, instance.lam, instance.mu
    lower, upper = instance.lower, instance.upper

    if variant == L1_OVER_L2:
        eval_g = lambda x: float(np.linalg.norm(x))
        subgrad_g = lambda x: l2_norm_subgrad(x)[1]
        dual_norm = lambda y: float(np.linalg.norm(y))
    else:
        if instance.K is None:
            raise ValueError("the top-K variant needs K")
        K = instance.K
        eval_g = lambda x: topk_norm(x, K)
        subgrad_g = lambda x: topk_norm_subgrad(x, K)[1]
        dual_norm = lambda y: topk_dual_norm(y, K)

    def residual(x):
        return A @ x - b

    def eval_h1(x):
        r = residual(x)
        return 0.5 * lam * float(r @ r)

    def grad_h1(x):
        return lam * (A.T @ residual(x))

    def eval_h2(x):
        tr = truncate_mu(residual(x), mu)
        return 0.5 * lam * float(tr @ tr)

    def subgrad_h2(x):
        return lam * (A.T @ truncate_mu(residual(x), mu))

    return FractionalProblem(
        eval_f=l1_norm,
        eval_g=eval_g,
        subgrad_g=subgrad_g,
        eval_h1=eval_h1,
        grad_h1=grad_h1,
        eval_h2=eval_h2,
        subgrad_h2=subgrad_h2,
        prox_fC=lambda v, w: prox_weighted_l1_box(v, w, lower, upper),
        # both denominators vanish only at the origin
        in_omega=lambda x: bool(np.any(x != 0)),
        in_C=lambda x: bool(np.all(x >= lower) and np.all(x <= upper)),
        dimension=instance.n,
        dual_norm_g=dual_norm,
        name=variant,
    )
