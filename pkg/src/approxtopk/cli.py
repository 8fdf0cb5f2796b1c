"""``approxtopk`` command line.

Exit codes: 0 success, 1 usage error, 2 infeasible or empty result.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
import warnings

import numpy as np

from . import _backend
from .core import AlgoParams, ParameterError, measure_recall, select_top
from .core import stage1_partial_reduce
from .dataset_io import read_dataset, synth_gaussian, write_csv
from .mips import MipsRequest, exact_mips, mips_fused, mips_unfused, padded_length
from .perf_model import (
    PROFILES,
    estimate_runtime,
    fused_stage1_footprint,
    mips_arithmetic_intensity,
    profiles_from_text,
    ridge_vector_ops_per_4bytes,
    ridge_vector_ops_per_dot,
    stage1_boundedness,
    stage1_footprint,
)
from .planner import (
    DEFAULT_K_FRACTIONS,
    InfeasibleError,
    PlanRequest,
    reduction_factor_grid,
    select_parameters,
)
from .recall import (
    exact_expected_recall,
    mc_expected_recall,
    recall_bound_improved,
    recall_bound_original,
    recall_bound_quartic,
)
from .simulate import DEFAULT_RUNS, simulate

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _non_negative(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _fraction(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return v


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text}") from None


# output


def _emit(records, fmt, out):
    """``records``: (config, metric, value, stderr) tuples."""
    if fmt == "csv":
        out.write(write_csv(records))
        return
    rows = [(c, m, _show(v), "" if e is None else _show(e)) for c, m, v, e in records]
    head = ("config", "metric", "value", "stderr")
    widths = [max(len(r[i]) for r in rows + [head]) for i in range(4)]
    for r in [head] + rows:
        out.write("  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip() + "\n")


def _show(v):
    if isinstance(v, float):
        if math.isnan(v) or math.isinf(v):
            return str(v)
        if v == int(v) and abs(v) < 1e15:
            return str(int(v))
        return f"{v:.6g}" if abs(v) >= 1e4 or abs(v) < 1e-3 else f"{v:.6f}"
    return str(v)


def _cfg(**kw):
    return ";".join(f"{k}={v}" for k, v in kw.items())


def _params(n, b, k, kprime, lane):
    try:
        return AlgoParams(n, b, kprime, k, lane)
    except ParameterError as e:
        raise UsageError(str(e)) from None


# subcommands


def cmd_plan(args, out):
    try:
        req = PlanRequest(
            args.n, args.k, args.recall_target, tuple(range(1, args.max_kprime + 1)), args.lane_multiple
        )
    except ValueError as e:
        raise UsageError(str(e)) from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = select_parameters(req, seed=args.seed, method=args.method)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    cfg = _cfg(n=args.n, k=args.k, target=args.recall_target)
    recs = [
        (cfg, "local_k", res.local_k, None),
        (cfg, "num_buckets", res.num_buckets, None),
        (cfg, "num_elements", res.num_elements, None),
        (cfg, f"recall_{res.estimated_recall.method}", res.estimated_recall.value,
         res.estimated_recall.std_error),
    ]
    for c in res.candidates:
        e = c.estimated_recall
        recs.append((_cfg(kprime=c.local_k, b=c.num_buckets, elements=c.num_elements),
                     f"candidate_recall_{e.method}", e.value, e.std_error))
    _emit(recs, args.format, out)


_BOUNDS = {
    "bound": recall_bound_improved,
    "quartic": recall_bound_quartic,
    "original": recall_bound_original,
}


def cmd_estimate_recall(args, out):
    p = _params(args.n, args.b, args.k, args.kprime, args.lane_multiple)
    if args.method == "exact":
        est = exact_expected_recall(p)
    elif args.method == "mc":
        est = mc_expected_recall(p, args.trials, seed=args.seed)
    else:
        try:
            est = _BOUNDS[args.method](p)
        except ParameterError as e:
            raise UsageError(str(e)) from None
    recs = [(_cfg(n=p.n, b=p.num_buckets, k=p.global_k, kprime=p.local_k), est.method, est.value,
             est.std_error)]
    if est.trials is not None:
        recs.append((recs[0][0], "trials", est.trials, None))
    _emit(recs, args.format, out)


def cmd_simulate(args, out):
    p = _params(args.n, args.b, args.k, args.kprime, args.lane_multiple)
    if args.n > 2**24:
        raise UsageError("simulate needs n <= 2**24 (distinct float32 integers)")
    (res,) = simulate(
        [p], args.runs, args.seed, mc_trials=args.mc_trials or None, threads=args.threads
    )
    cfg = _cfg(n=p.n, b=p.num_buckets, k=p.global_k, kprime=p.local_k, runs=res.runs)
    recs = [
        (cfg, "empirical_mean", res.mean, res.std_error),
        (cfg, "empirical_std", res.std, None),
        (cfg, "exact", res.exact.value, None),
    ]
    if res.mc is not None:
        recs.append((cfg, "monte_carlo", res.mc.value, res.mc.std_error))
    _emit(recs, args.format, out)


def _median_iqr(samples):
    q1, med, q3 = np.percentile(samples, [25, 50, 75])
    return float(med), float(q3 - q1)


def bench_config(x, p, *, repeats, warmup, backend=None, threads=None, exact_baseline=False):
    """Median and IQR (seconds) of stage 1, stage 2, total and optionally a full sort."""
    t1, t2, tot, tex = [], [], [], []
    for it in range(warmup + repeats):
        a = time.perf_counter()
        cand = stage1_partial_reduce(x, p, backend=backend, threads=threads)
        b = time.perf_counter()
        select_top(cand, p.global_k)
        c = time.perf_counter()
        if exact_baseline:
            np.argsort(-x, axis=-1, kind="stable")[..., : p.global_k]
            d = time.perf_counter()
        if it >= warmup:
            t1.append(b - a)
            t2.append(c - b)
            tot.append(c - a)
            if exact_baseline:
                tex.append(d - c)
    out = {"stage1": _median_iqr(t1), "stage2": _median_iqr(t2), "total": _median_iqr(tot)}
    if exact_baseline:
        out["exact_sort"] = _median_iqr(tex)
    return out


def cmd_bench(args, out):
    p = _params(args.n, args.b, args.k, args.kprime, args.lane_multiple)
    x = np.random.default_rng(args.seed).standard_normal((args.batch, args.n), dtype=np.float32)
    res = bench_config(
        x, p, repeats=args.repeats, warmup=args.warmup, backend=args.backend,
        threads=args.threads, exact_baseline=args.exact_baseline,
    )
    cfg = _cfg(batch=args.batch, n=p.n, b=p.num_buckets, k=p.global_k, kprime=p.local_k,
               backend=args.backend or _backend.BACKEND_NAME)
    recs = []
    for name, (med, iqr) in res.items():
        recs.append((cfg, f"{name}_median_s", med, None))
        recs.append((cfg, f"{name}_iqr_s", iqr, None))
    _emit(recs, args.format, out)


def cmd_grid(args, out):
    n_values = [2**e for e in range(args.n_min_exp, args.n_max_exp + 1)]
    try:
        grid = reduction_factor_grid(
            args.k_fractions, n_values, args.recall_target, args.max_kprime,
            lane_multiple=args.lane_multiple, method=args.method, seed=args.seed,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None
    ratios = grid.ratios
    recs = []
    for i, frac in enumerate(grid.k_fractions):
        for j, n in enumerate(grid.n_values):
            cfg = _cfg(k_fraction=frac, n=n, k=int(grid.k_values[i, j]))
            recs.append((cfg, "baseline_elements", float(grid.baseline_elements[i, j]), None))
            recs.append((cfg, "best_elements", float(grid.best_elements[i, j]), None))
            recs.append((cfg, "best_local_k", int(grid.best_local_k[i, j]), None))
            recs.append((cfg, "ratio", float(ratios[i, j]), None))
    if np.all(np.isnan(ratios)):
        _emit(recs, args.format, out)
        return EXIT_INFEASIBLE
    recs.append((_cfg(target=args.recall_target), "median_ratio", grid.median_ratio(), None))
    _emit(recs, args.format, out)


def _load_mips_inputs(args):
    if args.database:
        if not args.queries:
            raise UsageError("--database needs --queries")
        return read_dataset(args.database), read_dataset(args.queries)
    if args.synthetic:
        rows, dims, nq = args.synthetic
        return synth_gaussian(rows, dims, args.seed), synth_gaussian(nq, dims, args.seed + 1)
    raise UsageError("give --database/--queries or --synthetic ROWS DIMS QUERIES")


def cmd_mips(args, out):
    db, q = _load_mips_inputs(args)
    if db.dims != q.dims:
        raise UsageError(f"dimension mismatch: {db.dims} vs {q.dims}")
    if not 1 <= args.k <= db.rows:
        raise UsageError(f"--k must lie in [1, {db.rows}]")
    n = padded_length(db.rows, args.lane_multiple)
    if args.b:
        p = _params(n, args.b, args.k, args.kprime, args.lane_multiple)
    else:
        req = PlanRequest(n, args.k, args.recall_target, tuple(range(1, args.max_kprime + 1)),
                          args.lane_multiple)
        plan = select_parameters(req, seed=args.seed)
        p = plan.params(n, args.k, args.lane_multiple)
    try:
        mreq = MipsRequest(db, q, p)
    except (ValueError, ParameterError) as e:
        raise UsageError(str(e)) from None
    block = args.block_cols or p.num_buckets
    a = time.perf_counter()
    if args.unfused:
        res = mips_unfused(mreq, threads=args.threads)
    else:
        try:
            res = mips_fused(mreq, block, threads=args.threads)
        except ParameterError as e:
            raise UsageError(str(e)) from None
    elapsed = time.perf_counter() - a
    cfg = _cfg(rows=db.rows, dims=db.dims, queries=q.rows, n=n, b=p.num_buckets, k=p.global_k,
               kprime=p.local_k, path="unfused" if args.unfused else f"fused:{block}")
    recs = [(cfg, "seconds", elapsed, None)]
    if not args.no_check:
        rec = np.atleast_1d(measure_recall(res, exact_mips(db, q, args.k)))
        se = float(np.std(rec, ddof=1) / math.sqrt(rec.size)) if rec.size > 1 else None
        recs.append((cfg, "recall_vs_bruteforce", float(rec.mean()), se))
        recs.append((cfg, "predicted_recall", exact_expected_recall(p).value, None))
    _emit(recs, args.format, out)


def _devices(args):
    profiles = dict(PROFILES)
    if args.profile_file:
        with open(args.profile_file) as fh:
            for prof in profiles_from_text(fh.read()):
                profiles[prof.name] = prof
    if args.device == "all":
        return list(profiles.values())
    if args.device not in profiles:
        raise UsageError(f"unknown device {args.device!r}; known: {sorted(profiles)}")
    return [profiles[args.device]]


def cmd_model(args, out):
    try:
        devices = _devices(args)
    except (OSError, ValueError) as e:
        raise UsageError(str(e)) from None
    recs = []
    want_all = not (args.ridge or args.kprime or args.intensity or args.runtime)
    for dev in devices:
        cfg = _cfg(device=dev.name)
        if args.ridge or want_all:
            recs.append((cfg, "ridge_vpu_ops_per_dot", ridge_vector_ops_per_dot(dev, args.dims), None))
            recs.append((cfg, "ridge_vpu_ops_per_4bytes", ridge_vector_ops_per_4bytes(dev), None))
        if args.kprime or want_all:
            bd = stage1_boundedness(args.kprime or 1, dev)
            c = _cfg(device=dev.name, kprime=args.kprime or 1)
            recs.append((c, "stage1_ops_per_element", bd.ops_per_element, None))
            recs.append((c, "stage1_memory_bound", int(bd.regime == "memory"), None))
            recs.append((c, "memory_bound_up_to_kprime", bd.crossover_local_k, None))
        if args.runtime:
            n, b, kp, batch = args.runtime
            for label, fp in (
                ("stage1", stage1_footprint(n, batch, kp, b)),
                ("fused_mips_stage1", fused_stage1_footprint(batch, args.dims, n, kp, b)),
            ):
                secs, bott = estimate_runtime(fp, dev)
                c = _cfg(device=dev.name, kernel=label, n=n, b=b, kprime=kp, batch=batch,
                         bound="+".join(bott))
                recs.append((c, "predicted_seconds", secs, None))
    if args.intensity:
        b, d, n = args.intensity
        for fused in (False, True):
            it = mips_arithmetic_intensity(b, d, n, fused=fused)
            c = _cfg(b=b, d=d, n=n, fused=fused)
            recs.append((c, "flops_per_byte", it.flops_per_byte, None))
            recs.append((c, "upper_bound", it.upper_bound, None))
    _emit(recs, args.format, out)


# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("table", "csv"), default="table")
    common.add_argument("--threads", type=_positive, default=None,
                        help="worker threads (default: $ATK_THREADS or 1)")
    common.add_argument("--seed", type=_non_negative, default=0)

    shape = argparse.ArgumentParser(add_help=False)
    shape.add_argument("--n", type=_positive, required=True)
    shape.add_argument("--b", type=_positive, required=True, help="number of buckets")
    shape.add_argument("--k", type=_positive, required=True)
    shape.add_argument("--kprime", type=_positive, default=1)
    shape.add_argument("--lane-multiple", type=_positive, default=128)

    parser = _Parser(prog="approxtopk", description="Two-stage approximate top-k toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan", parents=[common], help="choose (K', B) for a recall target")
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--k", type=_positive, required=True)
    p.add_argument("--recall-target", type=_fraction, required=True)
    p.add_argument("--max-kprime", type=_positive, default=4)
    p.add_argument("--lane-multiple", type=_positive, default=128)
    p.add_argument("--method", choices=("mc", "exact"), default="mc")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("estimate-recall", parents=[common, shape], help="expected recall")
    p.add_argument("--method", choices=("exact", "mc", "bound", "quartic", "original"),
                   default="exact")
    p.add_argument("--trials", type=_positive, default=262_144)
    p.set_defaults(func=cmd_estimate_recall)

    p = sub.add_parser("simulate", parents=[common, shape], help="empirical recall")
    p.add_argument("--runs", type=_positive, default=DEFAULT_RUNS)
    p.add_argument("--mc-trials", type=_non_negative, default=262_144, help="0 disables MC")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", parents=[common, shape], help="time stage 1 and stage 2")
    p.add_argument("--batch", type=_positive, default=8)
    p.add_argument("--repeats", type=_positive, default=10)
    p.add_argument("--warmup", type=_non_negative, default=3)
    p.add_argument("--exact-baseline", action="store_true", help="also time a full sort")
    p.add_argument("--backend", choices=sorted(_backend.BACKENDS), default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("grid", parents=[common], help="reduction factor over K'=1")
    p.add_argument("--k-fractions", type=_float_list, default=list(DEFAULT_K_FRACTIONS))
    p.add_argument("--n-min-exp", type=_positive, default=8)
    p.add_argument("--n-max-exp", type=_positive, default=32)
    p.add_argument("--recall-target", type=_fraction, default=0.99)
    p.add_argument("--max-kprime", type=_positive, default=4)
    p.add_argument("--lane-multiple", type=_positive, default=128)
    p.add_argument("--method", choices=("mc", "exact"), default="exact")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("mips", parents=[common], help="maximum inner-product search")
    p.add_argument("--database", help="ATKV file, one vector per row")
    p.add_argument("--queries", help="ATKV file")
    p.add_argument("--synthetic", type=_positive, nargs=3, metavar=("ROWS", "DIMS", "QUERIES"))
    p.add_argument("--k", type=_positive, required=True)
    p.add_argument("--recall-target", type=_fraction, default=0.99)
    p.add_argument("--max-kprime", type=_positive, default=4)
    p.add_argument("--b", type=_positive, help="bucket count (skips planning)")
    p.add_argument("--kprime", type=_positive, default=1)
    p.add_argument("--lane-multiple", type=_positive, default=128)
    p.add_argument("--block-cols", type=_positive, help="default: the bucket count")
    p.add_argument("--unfused", action="store_true")
    p.add_argument("--no-check", action="store_true", help="skip the brute-force recall check")
    p.set_defaults(func=cmd_mips)

    p = sub.add_parser("model", parents=[common], help="roofline model queries")
    p.add_argument("--device", default="all", help="profile name or 'all'")
    p.add_argument("--profile-file", help="extra key=value profiles")
    p.add_argument("--ridge", action="store_true", help="print ridge points")
    p.add_argument("--dims", type=_positive, default=128)
    p.add_argument("--kprime", type=_positive, help="stage-1 boundedness for this K'")
    p.add_argument("--intensity", type=_positive, nargs=3, metavar=("B", "D", "N"))
    p.add_argument("--runtime", type=_positive, nargs=4, metavar=("N", "BUCKETS", "KPRIME", "BATCH"))
    p.set_defaults(func=cmd_model)
    return parser


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is None:
        env = os.environ.get("ATK_THREADS")
        if env is not None:
            try:
                args.threads = _positive(env)
            except (ValueError, argparse.ArgumentTypeError):
                print(f"approxtopk: error: bad ATK_THREADS={env!r}", file=sys.stderr)
                return EXIT_USAGE
    try:
        code = args.func(args, out)
    except UsageError as e:
        print(f"approxtopk {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as e:
        print(f"approxtopk {args.command}: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
