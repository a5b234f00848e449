"""Command-line entry point: ``ampda {generate,solve,check,bench}``.

Exit codes: 0 success, 1 usage, 2 I/O or parse failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from dataclasses import asdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .data import (
    DEFAULT_LAMBDA, ConstructionError, ParseError, SyntheticSpec, dump_json,
    generate_instance, initial_point, read_instance, read_libsvm, read_trace_csv,
    recovery_error, spec_dict, write_instance, write_trace_csv,
)
from .diagnostics import (
    audit_trace, best_criticality, criticality_measure, fd_gradient_check,
)
from .oracles import L1_OVER_L2, L1_OVER_TOPK, RecoveryInstance, build_problem
from .problem import AmpdaError
from .solver import CONVERGED, IterateState, SolverConfig, make_state, solve

log = logging.getLogger("ampda")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
LS_VARIANT = "l1l2-ls"
VARIANT_CHOICES = (L1_OVER_L2, L1_OVER_TOPK, LS_VARIANT)
DEFAULT_MASTER_SEED = 20250101
WORKERS_ENV = "AMPDA_WORKERS"


class UsageError(Exception):
    pass


def _solver_flags(p):
    g = p.add_argument_group("solver")
    g.add_argument("--alpha-min", type=float, default=1e-4)
    g.add_argument("--alpha-max", type=float, default=1e4)
    g.add_argument("--sigma", type=float, default=1e-5)
    g.add_argument("--gamma", type=float, default=0.5)
    g.add_argument("--tol", type=float, default=1e-6)
    g.add_argument("--max-iters", type=int, default=100_000)
    g.add_argument("--max-backtracks", type=int, default=200)


def _config(args) -> SolverConfig:
    try:
        return SolverConfig(
            alpha_min=args.alpha_min, alpha_max=args.alpha_max, sigma=args.sigma,
            gamma=args.gamma, term_tol=args.tol, max_iters=args.max_iters,
            max_backtracks=args.max_backtracks)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ampda", description="AMPDA solver for L1/L2 and L1/top-K sparse recovery")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic instance file")
    p.add_argument("--R", type=int, default=1, help="scale factor (n = 1280 R)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", choices=(L1_OVER_L2, L1_OVER_TOPK), default=L1_OVER_L2)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("-o", "--out", required=True, help="instance file to write")

    p = sub.add_parser("solve", help="solve one instance")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", help="instance file from 'generate'")
    src.add_argument("--libsvm", help="LIBSVM file; solved as the L1/L2 least-squares model")
    p.add_argument("--n-features", type=int, default=None)
    p.add_argument("--variant", choices=VARIANT_CHOICES, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--bound", type=float, default=10.0,
                   help="box half-width for LIBSVM input (default 10)")
    p.add_argument("--x0", default=None, help="text file with an explicit starting point")
    p.add_argument("--trace", action="store_true", help="also write every iterate")
    p.add_argument("-o", "--out", default=".", help="output directory")
    _solver_flags(p)

    p = sub.add_parser("check", help="audit a solve's output")
    p.add_argument("--instance", required=True)
    p.add_argument("--variant", choices=VARIANT_CHOICES, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--trace-csv", required=True)
    p.add_argument("--iterates", default=None, help="iterates file written by 'solve --trace'")
    p.add_argument("--solution", default=None, help="final point written by 'solve'")
    p.add_argument("--sigma", type=float, default=1e-5)
    p.add_argument("--fd-step", type=float, default=1e-5)
    p.add_argument("-o", "--out", required=True, help="report JSON to write")

    p = sub.add_parser("bench", help="batch of seeded synthetic solves")
    p.add_argument("--variant", choices=(L1_OVER_L2, L1_OVER_TOPK), default=L1_OVER_L2)
    p.add_argument("--R", type=int, default=1)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--master-seed", type=int, default=DEFAULT_MASTER_SEED)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (default: ${WORKERS_ENV} or 1)")
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock times in summary.json (makes it non-reproducible)")
    p.add_argument("-o", "--out", required=True, help="output directory")
    _solver_flags(p)
    return parser


# ---------------------------------------------------------------------------

def _load_problem(args):
    """Resolve ``(instance, variant, info)`` from --instance / --libsvm flags."""
    if getattr(args, "libsvm", None):
        A, b = read_libsvm(args.libsvm, args.n_features)
        variant = args.variant or LS_VARIANT
        if variant != LS_VARIANT:
            raise UsageError("LIBSVM input is solved with --variant l1l2-ls")
        lam = args.lam if args.lam is not None else DEFAULT_LAMBDA[LS_VARIANT]
        n = A.shape[1]
        inst = RecoveryInstance(A=A, b=b, lam=lam, mu=0,
                                lower=-args.bound * np.ones(n), upper=args.bound * np.ones(n))
        return inst, variant, {"x_true": None, "seed": None}

    inst, info = read_instance(args.instance)
    variant = args.variant or info["variant"] or L1_OVER_L2
    changes = {}
    if variant == LS_VARIANT:
        changes["mu"] = 0
    if args.lam is not None:
        changes["lam"] = args.lam
    if variant == L1_OVER_TOPK and inst.K is None:
        raise UsageError("variant l1sk requires K in the instance file")
    if changes:
        fields = dict(A=inst.A, b=inst.b, lam=inst.lam, mu=inst.mu, lower=inst.lower,
                      upper=inst.upper, K=inst.K)
        fields.update(changes)
        inst = RecoveryInstance(**fields)
    return inst, variant, info


def _problem_variant(variant):
    return L1_OVER_L2 if variant == LS_VARIANT else variant


def _load_vector(path, n):
    try:
        x = np.loadtxt(path, dtype=float, ndmin=1)
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot read vector: {exc}", path=path) from None
    if x.shape != (n,):
        raise ParseError(f"vector has {x.size} entries, expected {n}", path=path)
    return x


def _save_vector(path, x):
    np.savetxt(path, np.asarray(x).reshape(-1, 1), fmt="%.17g")


def cmd_generate(args) -> int:
    try:
        spec = SyntheticSpec(R=args.R, variant=args.variant, lam=args.lam, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    gen = generate_instance(spec)
    write_instance(args.out, gen.instance, variant=spec.variant, x_true=gen.x_true,
                   seed=spec.seed)
    print(f"wrote {args.out}: m={spec.m} n={spec.n} K_true={spec.K_true} "
          f"mu_true={spec.mu_true} lambda={spec.lam_model:g}")
    return EXIT_OK


def cmd_solve(args) -> int:
    config = _config(args)
    inst, variant, info = _load_problem(args)
    problem = build_problem(inst, _problem_variant(variant))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    admissible, margin = None, None
    if args.x0:
        x0 = _load_vector(args.x0, inst.n)
    else:
        x0, admissible, margin = initial_point(inst, _problem_variant(variant))
        if not admissible:
            log.warning("constructed x0 is not admissible (margin %.3g); "
                        "pass --x0 to force a start", margin)
            return EXIT_NUMERIC

    res = solve(problem, x0, config, keep_vectors=args.trace)
    if res.status == "invalid_start":
        log.error("x0 is outside the domain of F")
        return EXIT_NUMERIC
    alpha_last = next((s.alpha_accepted for s in reversed(res.trace)
                       if s.alpha_accepted is not None), None)
    eps, alpha_used = best_criticality(problem, res.final_x, alpha_last)
    crit_last = criticality_measure(problem, res.final_x, alpha_last or 1.0)

    write_trace_csv(out / "trace.csv", res.trace, final_criticality=crit_last)
    _save_vector(out / "solution.txt", res.final_x)
    if args.trace:
        np.savetxt(out / "iterates.txt", np.array([s.x for s in res.trace]), fmt="%.17g")
    summary = {
        "variant": variant,
        "status": res.status,
        "iterations": res.iterations,
        "final_F": res.final_F,
        "wall_time_s": res.wall_time,
        "eps_measure": eps,
        "alpha_used": alpha_used,
        "total_backtracks": res.total_backtracks,
        "x0_admissible": admissible,
        "x0_margin": margin,
        "nnz": int(np.count_nonzero(res.final_x)),
        "config": asdict(config),
    }
    if info.get("x_true") is not None:
        summary["rec_err"] = recovery_error(res.final_x, info["x_true"])
    dump_json(out / "summary.json", summary)
    print(f"status={res.status} iterations={res.iterations} F={res.final_F:.6f} "
          f"criticality={eps:.3e}")
    if res.message:
        print(res.message, file=sys.stderr)
    return EXIT_OK if res.status == CONVERGED else EXIT_NUMERIC


def _trace_from_rows(rows, iterates, problem):
    """Rebuild :class:`IterateState` records from a trace CSV (and iterates)."""
    if iterates is not None and len(iterates) != len(rows):
        raise ParseError(f"{len(iterates)} iterates for {len(rows)} trace rows")
    trace = []
    for i, row in enumerate(rows):
        if iterates is not None:
            s = make_state(problem, iterates[i], int(row["iter"]))
        else:
            s = IterateState(k=int(row["iter"]), x=None, c=math.nan, y=None, z=None,
                             grad_h1=None, f_val=math.nan, g_val=math.nan,
                             h1_val=math.nan, h2_val=math.nan, F_val=row["F"])
        s.step_norm = row.get("step_norm")
        s.alpha_accepted = row.get("alpha")
        s.q_next = row.get("Q")
        b = row.get("backtracks")
        s.backtracks = None if b is None else int(b)
        trace.append(s)
    return trace


def cmd_check(args) -> int:
    inst, variant, _ = _load_problem(args)
    problem = build_problem(inst, _problem_variant(variant))
    rows = read_trace_csv(args.trace_csv)
    if not rows:
        raise ParseError("trace CSV has no rows", path=args.trace_csv)
    iterates = None
    if args.iterates:
        try:
            iterates = np.loadtxt(args.iterates, dtype=float, ndmin=2)
        except (OSError, ValueError) as exc:
            raise ParseError(str(exc), path=args.iterates) from None
    trace = _trace_from_rows(rows, iterates, problem)
    report = audit_trace(problem, trace, args.sigma)

    if iterates is not None:
        final_x = iterates[-1]
    else:
        sol = args.solution or str(Path(args.trace_csv).with_name("solution.txt"))
        final_x = _load_vector(sol, inst.n)
        alpha = next((r["alpha"] for r in reversed(rows) if r.get("alpha")), None)
        report.eps_measure, report.alpha_used = best_criticality(problem, final_x, alpha)
    report.grad_check_relerr = fd_gradient_check(problem, final_x, args.fd_step)
    dump_json(args.out, report.to_dict())
    print(f"steps={report.steps_audited} descent_violations={report.descent_violations} "
          f"eps={report.eps_measure:.3e} grad_relerr={report.grad_check_relerr:.2e}")
    return EXIT_OK if report.descent_violations == 0 else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# bench

def run_seed(spec: SyntheticSpec, config: SolverConfig):
    """Generate, start and solve one seeded instance. Never raises."""
    rec = {"seed": spec.seed}
    try:
        t0 = time.perf_counter()
        gen = generate_instance(spec)
        t_gen = time.perf_counter()
        problem = build_problem(gen.instance, spec.variant)
        x0, admissible, _ = initial_point(gen.instance, spec.variant)
        t1 = time.perf_counter()
        curve = []
        res = solve(problem, x0, config,
                    callback=lambda s: curve.append((s.k, time.perf_counter() - t1, s.F_val)))
        t2 = time.perf_counter()
        alpha = next((s.alpha_accepted for s in reversed(res.trace)
                      if s.alpha_accepted is not None), None)
        eps, _ = best_criticality(problem, res.final_x, alpha)
        rec.update(
            status=res.status, admissible=admissible, obj=res.final_F,
            iters=res.iterations, rec_err=recovery_error(res.final_x, gen.x_true),
            eps_measure=eps, backtracks=res.total_backtracks,
            time_s=t2 - t1, startup_s=t1 - t_gen, generate_s=t_gen - t0, curve=curve)
    except (AmpdaError, ValueError, ArithmeticError) as exc:
        rec.update(status="error", error=str(exc))
    return rec


METRICS = ("obj", "iters", "rec_err", "eps_measure")


def _aggregate(runs, metrics):
    agg = {}
    for key in metrics:
        vals = np.array([r[key] for r in runs if r.get(key) is not None], dtype=float)
        if vals.size:
            agg[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
        else:
            agg[key] = {"mean": None, "std": None}
    return agg


def _table(variant, R, agg, runs):
    def cell(key, fmt):
        a = agg[key]
        if a["mean"] is None:
            return "-"
        return f"{format(a['mean'], fmt)}({format(a['std'], fmt)})"
    ok = [r for r in runs if r.get("status") != "error"]
    t = np.array([r["time_s"] for r in ok]) if ok else np.zeros(1)
    s = np.array([r["startup_s"] for r in ok]) if ok else np.zeros(1)
    header = f"{'':6} {'Alg':6} {'Time (startup)':>22} {'Iter':>8} {'Obj':>20} {'RecErr':>20}"
    row = (f"R={R:<4} {'AMPDA':6} "
           f"{f'{t.mean():.3f}({t.std():.3f}) ({s.mean():.3f})':>22} "
           f"{cell('iters', '.0f'):>8} {cell('obj', '.3f'):>20} {cell('rec_err', '.2e'):>20}")
    return f"variant={variant}\n{header}\n{row}\n"


def cmd_bench(args) -> int:
    if args.runs < 1:
        raise UsageError("--runs must be positive")
    config = _config(args)
    try:
        specs = [SyntheticSpec(R=args.R, variant=args.variant, lam=args.lam,
                               seed=args.master_seed + i) for i in range(args.runs)]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    workers = args.workers or int(os.environ.get(WORKERS_ENV, "1") or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(run_seed, specs, [config] * len(specs)))
    else:
        runs = [run_seed(s, config) for s in specs]
    runs.sort(key=lambda r: r["seed"])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    per_run = []
    for r in runs:
        per_run.append({
            "seed": r["seed"], "status": r["status"], "obj": r.get("obj"),
            "iters": r.get("iters"), "rec_err": r.get("rec_err"),
            "eps_measure": r.get("eps_measure"),
            "time_s": r.get("time_s") if args.timing else None,
            **({"error": r["error"]} if "error" in r else {}),
        })
    metrics = METRICS + (("time_s",) if args.timing else ())
    agg = _aggregate(per_run, metrics)
    spec_info = spec_dict(specs[0])
    spec_info.pop("seed")
    summary = {
        "spec": spec_info,
        "solver": asdict(config),
        "master_seed": args.master_seed,
        "seeds": [s.seed for s in specs],
        "per_run": per_run,
        "aggregate": agg,
        "failures": sum(r["status"] != CONVERGED for r in runs),
    }
    dump_json(out / "summary.json", summary)

    timed = [r for r in runs if "time_s" in r]
    dump_json(out / "timing.json", {
        "per_run": [{"seed": r["seed"], "startup_s": r["startup_s"],
                     "iterative_s": r["time_s"], "generate_s": r["generate_s"]}
                    for r in timed],
        "aggregate": _aggregate([{"startup_s": r["startup_s"], "iterative_s": r["time_s"]}
                                 for r in timed], ("startup_s", "iterative_s")),
    })
    with open(out / "curves.csv", "w") as fh:
        fh.write("seed,iter,time_s,F\n")
        for r in timed:
            for k, t, F in r["curve"]:
                fh.write(f"{r['seed']},{k},{t:.17g},{F:.17g}\n")
    table = _table(args.variant, args.R, _aggregate(runs, METRICS), runs)
    (out / "table.txt").write_text(table)
    print(table, end="")

    failed = summary["failures"]
    if failed:
        log.warning("%d of %d runs did not converge", failed, len(runs))
    return EXIT_NUMERIC if failed > 0.1 * len(runs) else EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "check": cmd_check,
            "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ampda: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, OSError) as exc:
        print(f"ampda: {exc}", file=sys.stderr)
        return EXIT_IO
    except (AmpdaError, ArithmeticError, ValueError) as exc:
        print(f"ampda: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
