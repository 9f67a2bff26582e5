"""Command-line entry point: ``resbp {gen-grid,run,bench,trace,exact}``."""

from __future__ import annotations

import argparse
import csv
import sys

from . import experiments
from .errors import DidNotConverge, ModelError, TooLarge, WidthTooLarge
from .exact import eliminate_marginals
from .factor_graph import RNG_NAME, gen_potts_grid, read_model, write_model
from .propagation import all_variable_beliefs
from .schedulers import LEDGERS, SCHEDULES, RunOptions, run

EXIT_IO = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3


def _add_run_flags(p):
    p.add_argument("--tol", type=float, default=1e-3, help="convergence tolerance")
    p.add_argument("--max-sweeps", type=int, default=1000,
                   help="divergence cutoff in sweeps of computed messages")
    p.add_argument("--damping", type=float, default=0.0, help="damping weight in [0, 1)")
    p.add_argument("--ledger", choices=LEDGERS, default="sound",
                   help="RBP0L priority ledger")


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="resbp", formatter_class=fmt,
                                     description="Belief propagation with dynamic schedules.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-grid", formatter_class=fmt, help="write a random Potts grid model")
    p.add_argument("--n", type=int, default=10, help="grid side")
    p.add_argument("--c", type=float, default=5.0, help="coupling bound")
    p.add_argument("--seed", type=int, default=0, help=f"seed for {RNG_NAME}")
    p.add_argument("--out", required=True, help="model file to write")

    p = sub.add_parser("run", formatter_class=fmt, help="run one schedule on a model")
    p.add_argument("--model", required=True)
    p.add_argument("--schedule", choices=SCHEDULES, default="rbp0l")
    _add_run_flags(p)
    p.add_argument("--beliefs", default=None, help="CSV file for variable beliefs")

    p = sub.add_parser("bench", formatter_class=fmt, help="benchmark schedules on random grids")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--c", type=float, default=5.0)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--schedules", default="rbp0l,rbp1l", help="comma-separated list")
    _add_run_flags(p)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--no-timing", action="store_true",
                   help="leave the wall-time column empty so reruns are byte-identical")
    p.add_argument("--csv", required=True, help="output CSV")

    p = sub.add_parser("trace", formatter_class=fmt, help="per-update error metric trace")
    p.add_argument("--model", required=True)
    _add_run_flags(p)
    p.add_argument("--csv", required=True)

    p = sub.add_parser("exact", formatter_class=fmt, help="exact marginals by elimination")
    p.add_argument("--model", required=True)
    p.add_argument("--csv", required=True)
    return parser


def _options(args, schedule="rbp0l"):
    return RunOptions(tolerance=args.tol, max_sweeps=args.max_sweeps, damping=args.damping,
                      schedule=schedule, ledger=args.ledger)


def _write_marginals(path, marginals):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable_id", "state", "probability"])
        for i, m in enumerate(marginals):
            for x, p in enumerate(m):
                w.writerow([i, x, repr(float(p))])


def _cmd_gen_grid(args):
    write_model(gen_potts_grid(args.n, args.c, args.seed), args.out)


def _cmd_run(args):
    g = read_model(args.model)
    msgs, stats = run(g, _options(args, args.schedule))
    stats.model = args.model
    for key, value in stats.as_dict().items():
        if key == "seed":
            continue
        if isinstance(value, bool):
            value = str(value).lower()
        print(f"{key}={value}")
    if args.beliefs:
        _write_marginals(args.beliefs, all_variable_beliefs(g, msgs))


def _cmd_bench(args, parser):
    names = tuple(s.strip() for s in args.schedules.split(",") if s.strip())
    bad = [s for s in names if s not in SCHEDULES]
    if bad or not names:
        parser.error(f"unknown schedules {bad}; choose from {', '.join(SCHEDULES)}")
    cfg = experiments.BenchConfig(
        n=args.n, c=args.c, instances=args.instances, seed_base=args.seed_base,
        schedules=names, tolerance=args.tol, max_sweeps=args.max_sweeps,
        damping=args.damping, ledger=args.ledger, jobs=args.jobs)
    rows = experiments.bench_schedules(cfg)
    with open(args.csv, "w", encoding="utf-8") as fh:
        fh.write(experiments.bench_csv(rows, timing=not args.no_timing))
    print(experiments.format_summary(experiments.summarize(rows)))


def _cmd_trace(args):
    g = read_model(args.model)
    records = experiments.trace_metrics(g, _options(args))
    with open(args.csv, "w", encoding="utf-8") as fh:
        fh.write(experiments.trace_csv(records))
    print(f"records={len(records)}")


def _cmd_exact(args):
    g = read_model(args.model)
    result = eliminate_marginals(g)
    _write_marginals(args.csv, result.marginals)
    print(f"log_z={result.log_z!r}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen-grid":
            _cmd_gen_grid(args)
        elif args.command == "run":
            _cmd_run(args)
        elif args.command == "bench":
            _cmd_bench(args, parser)
        elif args.command == "trace":
            _cmd_trace(args)
        else:
            _cmd_exact(args)
    except DidNotConverge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ModelError, TooLarge, WidthTooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        parser.error(str(exc))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
