"""Synthetic instances, initial points, file formats and result serialization.

Random draw order for :func:`generate_instance` (one ``numpy`` PCG64 stream
seeded with ``spec.seed``):

1. the m*n entries of A, column by column (column-major), standard normal;
   a column that normalizes to zero is redrawn immediately (m fresh draws);
2. the support of x_true: ``rng.choice(n, K_true, replace=False)``;
3. the K_true signal values, standard normal, in support order;
4. the impulse positions: ``rng.choice(m, mu_true, replace=False)``;
5. the mu_true impulse values, standard normal (only their signs are used);
6. the m noise entries, standard normal.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .oracles import (
    L1_OVER_L2, L1_OVER_TOPK, RecoveryInstance, build_problem, dist2_sparse,
    top_indices,
)
from .problem import AmpdaError, eval_F

__all__ = [
    "ParseError",
    "ConstructionError",
    "SyntheticSpec",
    "GeneratedInstance",
    "DEFAULT_LAMBDA",
    "generate_instance",
    "initial_point",
    "read_libsvm",
    "write_libsvm",
    "recovery_error",
    "write_instance",
    "read_instance",
    "write_trace_csv",
    "read_trace_csv",
    "TRACE_COLUMNS",
]

DEFAULT_LAMBDA = {L1_OVER_L2: 5.0, L1_OVER_TOPK: 0.5, "l1l2-ls": 1.0}


class ParseError(AmpdaError, ValueError):
    def __init__(self, msg, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}: "
        elif where:
            where += " "
        super().__init__(where + msg)


class ConstructionError(AmpdaError, ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    """Sizes and constants of the synthetic robust-recovery benchmark."""

    R: int = 1
    variant: str = L1_OVER_L2
    lam: Optional[float] = None
    seed: int = 0
    noise_scale: float = 0.01
    impulse_magnitude: float = 2.0
    oversize: float = 1.3

    def __post_init__(self):
        if int(self.R) < 1:
            raise ValueError("R must be a positive integer")
        if self.variant not in (L1_OVER_L2, L1_OVER_TOPK):
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def n(self):
        return 1280 * self.R

    @property
    def m(self):
        return 365 * self.R

    @property
    def K_true(self):
        return 40 * self.R

    @property
    def mu_true(self):
        return 5 * self.R

    @property
    def K_model(self):
        return math.ceil(self.oversize * self.K_true)

    @property
    def mu_model(self):
        return math.ceil(self.oversize * self.mu_true)

    @property
    def lam_model(self):
        return DEFAULT_LAMBDA[self.variant] if self.lam is None else float(self.lam)


@dataclass(frozen=True, eq=False)
class GeneratedInstance:
    instance: RecoveryInstance
    x_true: np.ndarray
    z_impulse: np.ndarray
    seed: int
    variant: str = L1_OVER_L2


def generate_instance(spec: SyntheticSpec) -> GeneratedInstance:
    rng = np.random.default_rng(spec.seed)
    m, n = spec.m, spec.n
    A = rng.standard_normal(m * n).reshape(n, m).T.copy()
    norms = np.linalg.norm(A, axis=0)
    for j in np.flatnonzero(norms == 0):
        while norms[j] == 0:
            A[:, j] = rng.standard_normal(m)
            norms[j] = np.linalg.norm(A[:, j])
    A /= norms

    support = rng.choice(n, spec.K_true, replace=False)
    x_true = np.zeros(n)
    x_true[support] = rng.standard_normal(spec.K_true)

    pos = rng.choice(m, spec.mu_true, replace=False)
    z = np.zeros(m)
    z[pos] = spec.impulse_magnitude * np.sign(rng.standard_normal(spec.mu_true))

    b = A @ x_true - z + spec.noise_scale * rng.standard_normal(m)
    bound = max(5.0, float(np.abs(x_true).max()))
    inst = RecoveryInstance(
        A=A, b=b, lam=spec.lam_model, mu=spec.mu_model,
        lower=-bound * np.ones(n), upper=bound * np.ones(n),
        K=spec.K_model if spec.variant == L1_OVER_TOPK else None,
    )
    return GeneratedInstance(inst, x_true, z, spec.seed, spec.variant)


def initial_point(instance: RecoveryInstance, variant: str = L1_OVER_L2):
    """One-hot starting point along the column best correlated with the
    untruncated part of ``b``.

    Returns ``(x0, admissible, margin)`` where ``admissible`` tests
    ``F(x0) < 1 + lam/2 * dist^2(b, S_mu)``, the value of ``F`` near zero,
    and ``margin`` is the gap in that inequality.
    """
    A, b, mu = instance.A, instance.b, instance.mu
    keep = np.zeros(instance.m, dtype=bool)
    keep[top_indices(b, mu)] = True
    keep &= b != 0
    if np.count_nonzero(b) <= mu:
        raise ConstructionError("b is mu-sparse, so no admissible start exists")
    rest = np.where(keep, 0.0, b)          # b - T b
    corr = rest @ A
    i = int(np.argmax(np.abs(corr)))        # first maximizer
    col = A[:, i]
    denom = float(col @ col - col[keep] @ col[keep])
    if denom == 0.0:
        raise ConstructionError(f"column {i} vanishes off the kept support")
    theta = float(corr[i]) / denom
    x0 = np.zeros(instance.n)
    x0[i] = min(max(theta, instance.lower[i]), instance.upper[i])

    limit = 1.0 + 0.5 * instance.lam * dist2_sparse(b, mu)
    val = eval_F(build_problem(instance, variant), x0)
    if val.infinite:
        return x0, False, -math.inf
    margin = limit - val.value
    return x0, bool(margin > 0), margin


def recovery_error(x_hat, x_true) -> float:
    x_true = np.asarray(x_true, dtype=float)
    nrm = float(np.linalg.norm(x_true))
    if nrm == 0.0:
        raise ValueError("x_true is zero")
    return float(np.linalg.norm(np.asarray(x_hat, dtype=float) - x_true)) / nrm


# ---------------------------------------------------------------------------
# LIBSVM text format

def read_libsvm(path, n_features: Optional[int] = None):
    """Read a LIBSVM file into a dense ``(A, b)`` pair.

    Strict: indices are 1-based and strictly increasing, and comments are
    rejected.
    """
    labels, rows = [], []
    max_idx = 0
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                label = float(tokens[0])
            except ValueError:
                raise ParseError(f"bad label {tokens[0]!r}", lineno, path) from None
            row = {}
            last = 0
            for tok in tokens[1:]:
                idx_s, sep, val_s = tok.partition(":")
                if not sep:
                    raise ParseError(f"expected index:value, got {tok!r}", lineno, path)
                try:
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise ParseError(f"non-numeric token {tok!r}", lineno, path) from None
                if idx < 1:
                    raise ParseError(f"index {idx} < 1", lineno, path)
                if idx <= last:
                    raise ParseError(f"index {idx} does not increase (previous {last})",
                                     lineno, path)
                last = idx
                row[idx] = val
            max_idx = max(max_idx, last)
            labels.append(label)
            rows.append(row)
    if not rows:
        raise ParseError("empty file", path=path)
    n = max_idx if n_features is None else int(n_features)
    if max_idx > n:
        raise ParseError(f"feature index {max_idx} exceeds n_features={n}", path=path)
    A = np.zeros((len(rows), n))
    for r, row in enumerate(rows):
        for idx, val in row.items():
            A[r, idx - 1] = val
    return A, np.array(labels)


def write_libsvm(path, A, b):
    A = np.asarray(A, dtype=float)
    with open(path, "w") as fh:
        for label, row in zip(b, A):
            parts = [repr(float(label))]
            parts += [f"{j + 1}:{float(row[j])!r}" for j in np.flatnonzero(row)]
            fh.write(" ".join(parts) + "\n")


# ---------------------------------------------------------------------------
# instance container (plain text)

_MAGIC = "# ampda-instance 1"


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_instance(path, instance: RecoveryInstance, *, variant=None, x_true=None,
                   seed=None):
    """Write a self-describing text file: ``key value`` header lines followed
    by ``[section] rows cols`` blocks of whitespace-separated numbers."""
    out = io.StringIO()
    out.write(_MAGIC + "\n")
    header = {
        "variant": variant or "",
        "m": instance.m, "n": instance.n,
        "lambda": _fmt(instance.lam), "mu": instance.mu,
        "K": "" if instance.K is None else instance.K,
        "seed": "" if seed is None else int(seed),
    }
    for key, val in header.items():
        out.write(f"{key} {val}\n".rstrip() + "\n")

    def block(name, arr):
        arr = np.atleast_2d(np.asarray(arr, dtype=float))
        out.write(f"[{name}] {arr.shape[0]} {arr.shape[1]}\n")
        for row in arr:
            out.write(" ".join(_fmt(v) for v in row) + "\n")

    block("A", instance.A)
    block("b", instance.b)
    block("lower", instance.lower)
    block("upper", instance.upper)
    if x_true is not None:
        block("x_true", x_true)
    Path(path).write_text(out.getvalue())


def read_instance(path):
    """Inverse of :func:`write_instance`.

    Returns ``(instance, info)`` where ``info`` holds ``variant``, ``seed`` and
    ``x_true`` (each possibly ``None``).
    """
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ParseError(str(exc), path=path) from exc
    if not lines or lines[0].strip() != _MAGIC:
        raise ParseError("not an instance file (bad magic line)", 1, path)
    header, blocks = {}, {}
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line.startswith("["):
            try:
                name, rows, cols = line.replace("[", "").replace("]", "").split()
                rows, cols = int(rows), int(cols)
                data = np.array(" ".join(lines[i:i + rows]).split(), dtype=float)
                blocks[name] = data.reshape(rows, cols)
            except ValueError as exc:
                raise ParseError(f"bad block: {exc}", i, path) from None
            i += rows
        else:
            key, _, val = line.partition(" ")
            header[key] = val.strip()
    for need in ("A", "b", "lower", "upper"):
        if need not in blocks:
            raise ParseError(f"missing [{need}] block", path=path)
    try:
        inst = RecoveryInstance(
            A=blocks["A"], b=blocks["b"].ravel(), lam=float(header["lambda"]),
            mu=int(header["mu"]), lower=blocks["lower"].ravel(),
            upper=blocks["upper"].ravel(),
            K=int(header["K"]) if header.get("K") else None,
        )
    except (KeyError, ValueError) as exc:
        raise ParseError(f"invalid instance: {exc}", path=path) from None
    info = {
        "variant": header.get("variant") or None,
        "seed": int(header["seed"]) if header.get("seed") else None,
        "x_true": blocks["x_true"].ravel() if "x_true" in blocks else None,
    }
    return inst, info


# ---------------------------------------------------------------------------
# traces and summaries

TRACE_COLUMNS = ("iter", "F", "step_norm", "alpha", "backtracks", "criticality",
                 "alpha_trial", "Q", "time_s")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return _fmt(v)


def write_trace_csv(path, trace, final_criticality=None):
    """One row per recorded iterate.

    ``criticality`` of a non-final row is the prox residual at the accepted
    stepsize, which equals ``step_norm``; the final row takes
    ``final_criticality``.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for s in trace:
            crit = s.step_norm if s.step_norm is not None else final_criticality
            w.writerow([_cell(v) for v in (
                s.k, s.F_val, s.step_norm, s.alpha_accepted, s.backtracks, crit,
                s.alpha_trial, s.q_next, s.elapsed)])


def read_trace_csv(path):
    """Rows of a trace CSV as dicts of floats (``None`` for empty cells)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"iter", "F", "step_norm"} - set(reader.fieldnames or ())
        if missing:
            raise ParseError(f"trace CSV lacks columns {sorted(missing)}", path=path)
        for lineno, rec in enumerate(reader, 2):
            try:
                rows.append({k: (float(v) if v not in ("", None) else None)
                             for k, v in rec.items()})
            except ValueError:
                raise ParseError("non-numeric trace cell", lineno, path) from None
    return rows


def dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def spec_dict(spec: SyntheticSpec) -> dict:
    d = asdict(spec)
    d.update(n=spec.n, m=spec.m, K_true=spec.K_true, mu_true=spec.mu_true,
             K_model=spec.K_model, mu_model=spec.mu_model, lam=spec.lam_model)
    return d
