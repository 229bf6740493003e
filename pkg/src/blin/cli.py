"""Command-line front end.

    blin run --env two-peak --alg ablin --T 80000 --dz 0 --seed 7 --out runs/a
    blin compare --env two-peak --algs ablin zooming --seeds 0 1 2 --out runs/cmp
    blin zooming-oracle --env linear --r-min 0.0078125
    blin bounds --d 2 --dz 0 --Cz 16 --T 80000 --B 4
    blin lower-bound-env --family static --d 1 --T 100000 --B 3 --k 2 --i 3

Every subcommand also accepts ``--config FILE.json`` whose keys are flag names
(dashes or underscores); explicit flags win over the file.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis
from .engine import ConfigurationError, RunConfig, RunTrace, run_blin, run_zooming_baseline
from .environments import (
    InfeasiblePeaksError,
    RewardInstance,
    ResolutionWarning,
    UndefinedEstimateError,
    adaptive_lower_bound_world,
    constant_instance,
    estimate_from_table,
    linear_instance,
    reference_grid,
    static_family_params,
    static_lower_bound_instance,
    two_peak_instance,
    zooming_table,
)
from .geometry import ScheduleMismatchError, depth_of_edge
from .sequences import ACEParams, EdgeLengthSchedule, InvalidHorizonError, InvalidParameterError

ENVS = ("two-peak", "linear", "constant", "static-lb", "adaptive-lb")
ALGS = ("dblin", "ablin", "zooming")

ROUNDS_NOTE = (
    "rounds_used counts the intervals of the grid 0 = t_0 < ... < t_B = T: one per "
    "committed batch plus the final interval (a truncated batch or the cleanup "
    "phase), which needs no commit; commits lists executed commits only"
)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

USAGE_ERRORS = (
    ConfigurationError,
    InvalidParameterError,
    InvalidHorizonError,
    InfeasiblePeaksError,
    ScheduleMismatchError,
)


class UsageError(Exception):
    pass


# -- file output ----------------------------------------------------------------------


def write_atomic(path: Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(values: np.ndarray) -> list[str]:
    return [repr(float(v)) for v in values]


def trace_csv(trace: RunTrace, regret: np.ndarray) -> str:
    d = trace.d
    t = np.arange(1, trace.T + 1)
    index = [";".join(map(str, row)) for row in trace.cube_index.tolist()]
    cols = [t.tolist(), trace.batch.tolist(), trace.cube_depth.tolist(), index]
    cols += [_fmt(trace.arms[:, j]) for j in range(d)]
    cols += [_fmt(trace.rewards), _fmt(regret)]
    header = ["t", "batch", "cube_depth", "cube_index"] + [f"x{j}" for j in range(d)]
    header += ["reward", "cumulative_regret"]
    return csv_text(header, zip(*cols))


def regret_csv(regret: np.ndarray) -> str:
    return csv_text(["t", "regret"], zip(range(1, len(regret) + 1), _fmt(regret)))


def summary_dict(trace: RunTrace, instance: RewardInstance, regret: np.ndarray, alg: str, env: str) -> dict:
    return {
        "algorithm": alg,
        "env": env,
        "instance": instance.descriptor(),
        "config": trace.config,
        "T": trace.T,
        "grid": [int(g) for g in trace.grid],
        "batches": [rec.summary() for rec in trace.batches],
        "cleanup_start": trace.cleanup_start,
        "rounds_used": trace.rounds_used,
        "commits": trace.commits,
        "final_regret": float(regret[-1]),
        "rounds_convention": ROUNDS_NOTE,
        "extra": trace.extra,
    }


# -- partition snapshots --------------------------------------------------------------

SVG_SIZE = 512
FILL_ACTIVE = "#ffffff"
FILL_NEW = "#555555"
FILL_OLD = "#cccccc"


def _rects(depth: int, indices: np.ndarray, d: int):
    """(x, y, w, h) in pixels; y is flipped so the origin sits bottom-left."""
    edge = SVG_SIZE * math.ldexp(1.0, -depth)
    for row in indices.tolist():
        x = row[0] * edge
        if d == 1:
            yield x, 0.0, edge, float(SVG_SIZE)
        else:
            yield x, SVG_SIZE - (row[1] + 1) * edge, edge, edge


def partition_svg(trace: RunTrace, m: int) -> str:
    """Batch-m partition: active cubes white, cubes eliminated in batch m dark
    gray, cubes eliminated in earlier batches light gray."""
    d = trace.d
    parts = []
    for rec in trace.batches:
        if rec.m > m:
            break
        if rec.m < m:
            gone = rec.active.indices[~rec.survived]
            parts.append((FILL_OLD, rec.depth, gone))
            continue
        if rec.survived is None:
            parts.append((FILL_ACTIVE, rec.depth, rec.active.indices))
        else:
            parts.append((FILL_ACTIVE, rec.depth, rec.active.indices[rec.survived]))
            parts.append((FILL_NEW, rec.depth, rec.active.indices[~rec.survived]))
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" '
        f'viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">',
        f"<title>batch {m}</title>",
    ]
    for fill, depth, idx in parts:
        for x, y, w, h in _rects(depth, idx, d):
            lines.append(
                f'<rect x="{x:g}" y="{y:g}" width="{w:g}" height="{h:g}" '
                f'fill="{fill}" stroke="#000000" stroke-width="0.5"/>'
            )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


# -- building blocks ------------------------------------------------------------------


def build_instance(args) -> RewardInstance:
    env = args.env
    if env == "two-peak":
        return two_peak_instance()
    if env == "linear":
        return linear_instance()
    if env == "constant":
        return constant_instance(args.d or 2, args.value)
    d = args.d or 2
    B = args.B
    if env == "static-lb":
        grid = reference_grid(args.lb_T or args.T, B, d)
        return static_lower_bound_instance(static_family_params(d, args.k, grid), args.i)
    if env == "adaptive-lb":
        return adaptive_lower_bound_world(args.j, args.k, d, args.lb_T or args.T, B)
    raise UsageError(f"unknown env {env!r}")


def build_config(alg: str, T: int, d: int, dz: float, seed: int, args) -> RunConfig:
    if alg == "dblin":
        schedule = EdgeLengthSchedule.doubling()
    elif alg == "ablin":
        schedule = EdgeLengthSchedule.rounded_ace(ACEParams(d, dz, T))
    elif alg == "zooming":
        schedule = EdgeLengthSchedule.doubling()  # unused by the baseline
    else:
        raise UsageError(f"unknown algorithm {alg!r}")
    return RunConfig(T, schedule, arm_policy=args.arm_policy, seed=seed, noise_sigma=args.noise_sigma)


def execute(alg: str, config: RunConfig, instance: RewardInstance) -> RunTrace:
    if alg == "zooming":
        return run_zooming_baseline(config, instance)
    return run_blin(config, instance)


def _resolve_dz(args, instance: RewardInstance) -> float:
    return instance.d if args.dz is None and args.env == "constant" else (args.dz or 0.0)


# -- subcommands ----------------------------------------------------------------------


def cmd_run(args) -> int:
    instance = build_instance(args)
    config = build_config(args.alg, args.T, instance.d, _resolve_dz(args, instance), args.seed, args)
    trace = execute(args.alg, config, instance)
    regret = analysis.cumulative_regret(trace, instance)
    out = Path(args.out)
    write_atomic(out / "trace.csv", trace_csv(trace, regret))
    write_atomic(out / "regret.csv", regret_csv(regret))
    summary = summary_dict(trace, instance, regret, args.alg, args.env)
    write_atomic(out / "summary.json", dump_json(summary))
    if args.snapshots and trace.batches:
        if instance.d > 2:
            raise UsageError("partition snapshots need d <= 2")
        for rec in trace.batches:
            write_atomic(out / f"partition_batch_{rec.m}.svg", partition_svg(trace, rec.m))
    print(f"{args.alg} on {args.env}: rounds_used={trace.rounds_used} "
          f"commits={trace.commits} final_regret={summary['final_regret']:.4f} -> {out}")
    return EXIT_OK


def _compare_job(job):
    alg, seed, args = job
    instance = build_instance(args)
    config = build_config(alg, args.T, instance.d, _resolve_dz(args, instance), seed, args)
    trace = execute(alg, config, instance)
    regret = analysis.cumulative_regret(trace, instance)
    return alg, seed, regret, trace.batch, [int(g) for g in trace.grid], trace.rounds_used


def cmd_compare(args) -> int:
    if len(args.algs) < 2 and len(args.seeds) < 2:
        raise UsageError("compare needs at least two algorithms or two seeds")
    jobs = [(alg, seed, args) for alg in args.algs for seed in args.seeds]
    workers = args.workers or min(len(jobs), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_compare_job, jobs))
    else:
        results = [_compare_job(job) for job in jobs]

    out = Path(args.out)
    merged = io.StringIO()
    w = csv.writer(merged, lineterminator="\n")
    w.writerow(["alg", "seed", "t", "batch", "regret"])
    finals = {}
    for alg, seed, regret, batch, grid, rounds in results:
        vals = _fmt(regret)
        t = range(1, len(regret) + 1)
        b = batch.tolist()
        write_atomic(out / f"regret_{alg}_seed{seed}.csv",
                     csv_text(["t", "batch", "regret"], zip(t, b, vals)))
        w.writerows(zip([alg] * len(vals), [seed] * len(vals), t, b, vals))
        finals.setdefault(alg, {})[str(seed)] = {
            "final_regret": float(regret[-1]),
            "rounds_used": rounds,
            "grid": grid if alg != "zooming" else "per-pull",
        }
    write_atomic(out / "regret_long.csv", merged.getvalue())
    write_atomic(out / "finals.json", dump_json({"env": args.env, "T": args.T, "runs": finals}))
    for alg, runs in finals.items():
        mean = np.mean([r["final_regret"] for r in runs.values()])
        print(f"{alg}: mean final regret {mean:.2f} over {len(runs)} seeds")
    return EXIT_OK


def cmd_zooming_oracle(args) -> int:
    instance = build_instance(args)
    try:
        max_depth = depth_of_edge(args.r_min)
    except ScheduleMismatchError as exc:
        raise UsageError(str(exc)) from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ResolutionWarning)
        rows, truncated = zooming_table(instance, max_depth)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    report = {
        "env": args.env,
        "d": instance.d,
        "table": [{"depth": dep, "r": r, "N_r": n} for dep, r, n in rows],
        "truncated": truncated,
    }
    try:
        dz, cz = estimate_from_table(rows, instance.d)
        report.update(dz_hat=dz, Cz_hat=cz)
    except UndefinedEstimateError as exc:
        report.update(dz_hat=None, Cz_hat=None, error=str(exc))
    text = dump_json(report)
    if args.out:
        write_atomic(Path(args.out) / "zooming.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_bounds(args) -> int:
    report = analysis.bound_report(args.d, args.dz, args.Cz, args.T, args.B, args.C)
    text = report.to_json()
    if args.out:
        write_atomic(Path(args.out) / "bounds.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_lower_bound_env(args) -> int:
    args.env = "static-lb" if args.family == "static" else "adaptive-lb"
    args.lb_T = None
    instance = build_instance(args)
    text = dump_json(instance.descriptor())
    if args.out:
        write_atomic(Path(args.out) / "instance.json", text)
    sys.stdout.write(text)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------


def _add_env_flags(p, with_T: bool = True):
    p.add_argument("--env", choices=ENVS, default="two-peak")
    p.add_argument("--d", type=int, default=None, help="dimension for constant and lower-bound envs")
    p.add_argument("--value", type=float, default=0.0, help="level of the constant env")
    p.add_argument("--B", type=int, default=3, help="batch count of a lower-bound construction")
    p.add_argument("--k", type=int, default=2, help="static batch index / adaptive instance index")
    p.add_argument("--i", type=int, default=1, help="static instance index")
    p.add_argument("--j", type=int, default=1, help="adaptive world index")
    p.add_argument("--lb-T", type=int, default=None, help="horizon of the lower-bound grid (default --T)")
    if with_T:
        p.add_argument("--T", type=int, default=80000)


def _add_run_flags(p):
    p.add_argument("--dz", type=float, default=None, help="zooming dimension for the ACE schedule")
    p.add_argument("--arm-policy", choices=("center", "uniform"), default="center")
    p.add_argument("--noise-sigma", type=float, default=1.0)


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="blin", description="Elimination over dyadic cubes with batch-delayed rewards.")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("run", help="one run, trace and summary files")
    _add_env_flags(p)
    _add_run_flags(p)
    p.add_argument("--alg", choices=ALGS, default="ablin")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.add_argument("--snapshots", action="store_true", help="write partition_batch_m.svg files")
    p.set_defaults(func=cmd_run)
    subs["run"] = p

    p = sub.add_parser("compare", help="regret curves over algorithms and seeds")
    _add_env_flags(p)
    _add_run_flags(p)
    p.add_argument("--algs", nargs="+", choices=ALGS, default=["ablin", "zooming"])
    p.add_argument("--seeds", nargs="+", type=int, default=list(range(10)))
    p.add_argument("--workers", type=int, default=0, help="0 picks min(jobs, cpus)")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_compare)
    subs["compare"] = p

    p = sub.add_parser("zooming-oracle", help="brute-force zooming numbers")
    _add_env_flags(p)
    p.add_argument("--r-min", type=float, default=2.0**-6)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_zooming_oracle)
    subs["zooming-oracle"] = p

    p = sub.add_parser("bounds", help="closed-form regret and round bounds")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--dz", type=float, default=0.0)
    p.add_argument("--Cz", type=float, default=1.0)
    p.add_argument("--T", type=int, default=80000)
    p.add_argument("--B", type=int, default=4)
    p.add_argument("--C", type=float, default=math.e, help="base constant of the round floor")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bounds)
    subs["bounds"] = p

    p = sub.add_parser("lower-bound-env", help="descriptor of a lower-bound instance")
    p.add_argument("--family", choices=("static", "adaptive"), default="static")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--T", type=int, default=100000)
    p.add_argument("--B", type=int, default=3)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--i", type=int, default=1)
    p.add_argument("--j", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_lower_bound_env)
    subs["lower-bound-env"] = p

    for p in subs.values():
        p.add_argument("--config", default=None, help="JSON file of flag defaults")
    return parser, subs


def _load_config(argv: list[str]) -> dict:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    with open(known.config) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        cfg = _load_config(argv)
    except (OSError, ValueError, UsageError) as exc:
        print(f"blin: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if cfg:
        for p in subs.values():
            known = {a.dest for a in p._actions}
            p.set_defaults(**{k: v for k, v in cfg.items() if k in known})
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "T", 2) < 2 or getattr(args, "B", 1) < 1:
        print("blin: error: need T >= 2 and B >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, *USAGE_ERRORS, IndexError) as exc:
        print(f"blin: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report and signal runtime failure
        print(f"blin: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
