"""Benchmark and error-metric trace experiments on random Potts grids."""

from __future__ import annotations

import csv
import io
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, astuple, fields
from typing import Sequence

import numpy as np

from .errors import DidNotConverge, EmptyInput
from .exact import avg_variable_kl, eliminate_marginals
from .factor_graph import RNG_NAME, FactorGraph, gen_potts_grid, grid_column_major_order
from .propagation import (
    BetheTracker, all_variable_beliefs, dynamic_range, init_uniform, message_kl, residual,
)
from .schedulers import SCHEDULES, RunOptions, run, run_rbp0l

BENCH_COLUMNS = (
    "seed", "n", "c", "schedule", "converged", "messages_computed", "messages_performed",
    "wasted", "sweeps_equivalent", "final_max_residual", "avg_kl", "wall_time_s",
)


@dataclass(frozen=True)
class BenchConfig:
    n: int = 10
    c: float = 5.0
    instances: int = 20
    seed_base: int = 0
    schedules: tuple = ("rbp0l", "rbp1l")
    tolerance: float = 1e-3
    max_sweeps: int = 1000
    damping: float = 0.0
    ledger: str = "sound"
    jobs: int = 1

    def __post_init__(self):
        if self.instances < 1:
            raise ValueError("instances must be >= 1")
        unknown = [s for s in self.schedules if s not in SCHEDULES]
        if unknown or not self.schedules:
            raise ValueError(f"unknown schedules {unknown}; choose from {SCHEDULES}")

    def run_options(self, schedule):
        return RunOptions(tolerance=self.tolerance, max_sweeps=self.max_sweeps,
                          damping=self.damping, schedule=schedule, ledger=self.ledger)


def _bench_instance(cfg: BenchConfig, seed: int):
    g = gen_potts_grid(cfg.n, cfg.c, seed)
    exact = eliminate_marginals(g, grid_column_major_order(cfg.n))
    rows = []
    for name in cfg.schedules:
        msgs, stats = run(g, cfg.run_options(name))
        kl = avg_variable_kl(exact, all_variable_beliefs(g, msgs))
        rows.append({
            "seed": seed, "n": cfg.n, "c": cfg.c, "schedule": name,
            "converged": stats.converged,
            "messages_computed": stats.messages_computed,
            "messages_performed": stats.messages_performed,
            "wasted": stats.wasted,
            "sweeps_equivalent": stats.sweeps_equivalent,
            "final_max_residual": stats.final_max_residual,
            "avg_kl": kl,
            "wall_time_s": stats.wall_time,
        })
    return rows


def bench_schedules(cfg: BenchConfig):
    """One row per (instance, schedule), ordered by seed then schedule list."""
    seeds = range(cfg.seed_base, cfg.seed_base + cfg.instances)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            per_seed = list(pool.map(_bench_instance, [cfg] * len(seeds), seeds))
    else:
        per_seed = [_bench_instance(cfg, s) for s in seeds]
    return [row for rows in per_seed for row in rows]


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def bench_csv(rows, timing=True) -> str:
    """CSV text; with ``timing=False`` the wall-time column is left empty."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for row in rows:
        w.writerow([
            "" if (col == "wall_time_s" and not timing) else
            (f"{row[col]:.6f}" if col == "wall_time_s" else _fmt(row[col]))
            for col in BENCH_COLUMNS
        ])
    return buf.getvalue()


def read_bench_csv(text):
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        out.append({
            "seed": int(rec["seed"]), "n": int(rec["n"]), "c": float(rec["c"]),
            "schedule": rec["schedule"], "converged": rec["converged"] == "true",
            "messages_computed": int(rec["messages_computed"]),
            "messages_performed": int(rec["messages_performed"]),
            "wasted": int(rec["wasted"]),
            "sweeps_equivalent": float(rec["sweeps_equivalent"]),
            "final_max_residual": float(rec["final_max_residual"]),
            "avg_kl": float(rec["avg_kl"]),
            "wall_time_s": float(rec["wall_time_s"]) if rec["wall_time_s"] else None,
        })
    return out


# ---------------------------------------------------------------------------
# summary


def _mean(xs):
    return statistics.fmean(xs) if xs else None


def _median(xs):
    return statistics.median(xs) if xs else None


def summarize(rows):
    if not rows:
        raise EmptyInput("no benchmark rows to summarize")
    by_sched = {}
    by_seed = {}
    for row in rows:
        by_sched.setdefault(row["schedule"], []).append(row)
        by_seed.setdefault(row["seed"], {})[row["schedule"]] = row

    schedules = {}
    for name, rs in by_sched.items():
        conv = [r for r in rs if r["converged"]]
        entry = {
            "runs": len(rs),
            "converged": len(conv),
            "convergence_rate": len(conv) / len(rs),
            "mean_computed": _mean([r["messages_computed"] for r in conv]),
            "median_computed": _median([r["messages_computed"] for r in conv]),
            "mean_performed": _mean([r["messages_performed"] for r in conv]),
            "median_performed": _median([r["messages_performed"] for r in conv]),
            "mean_kl": _mean([r["avg_kl"] for r in conv]),
        }
        if name == "rbp1l":
            entry["wasted_fraction"] = _mean(
                [r["wasted"] / r["messages_computed"] for r in conv if r["messages_computed"]])
        schedules[name] = {k: v for k, v in entry.items() if v is not None}

    wins = {}
    names = list(by_sched)
    for a in names:
        for b in names:
            if a == b:
                continue
            joint = [s for s in by_seed.values()
                     if a in s and b in s and s[a]["converged"] and s[b]["converged"]]
            wins[(a, b)] = sum(1 for s in joint
                               if s[a]["messages_computed"] < s[b]["messages_computed"])
    out = {"schedules": schedules, "wins": wins}

    joint = [s for s in by_seed.values()
             if "rbp0l" in s and "rbp1l" in s and s["rbp0l"]["converged"]
             and s["rbp1l"]["converged"]]
    out["joint_converged"] = len(joint)
    if joint:
        m0 = statistics.fmean(s["rbp0l"]["messages_computed"] for s in joint)
        m1 = statistics.fmean(s["rbp1l"]["messages_computed"] for s in joint)
        out["rbp0l_fewer"] = wins.get(("rbp0l", "rbp1l"), 0)
        out["computed_ratio"] = m0 / m1 if m1 else None
        out["mean_abs_kl_diff"] = statistics.fmean(
            abs(s["rbp0l"]["avg_kl"] - s["rbp1l"]["avg_kl"]) for s in joint)
    return out


def format_summary(summary) -> str:
    lines = [f"rng: {RNG_NAME}"]
    header = f"{'schedule':<12} {'conv':>9} {'mean comp':>12} {'med comp':>10} " \
             f"{'mean perf':>12} {'wasted':>7} {'mean kl':>10}"
    lines.append(header)
    for name, s in summary["schedules"].items():
        def num(key, spec):
            return format(s[key], spec) if key in s else "-"
        lines.append(
            f"{name:<12} {s['converged']:>4}/{s['runs']:<4} {num('mean_computed', '12.1f')} "
            f"{num('median_computed', '10.1f')} {num('mean_performed', '12.1f')} "
            f"{num('wasted_fraction', '7.3f'):>7} {num('mean_kl', '10.5f'):>10}"
        )
    for (a, b), k in summary["wins"].items():
        lines.append(f"{a} computed fewer messages than {b}: {k}")
    if "computed_ratio" in summary:
        lines.append(f"jointly converged rbp0l/rbp1l: {summary['joint_converged']}; "
                     f"ratio of mean computed {summary['computed_ratio']:.4f}; "
                     f"mean |kl difference| {summary['mean_abs_kl_diff']:.6f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# trace


@dataclass
class TraceRecord:
    step: int
    edge: int
    r_step: float
    d_step: float
    kl_step: float
    r_prev_conv: float
    r_new_conv: float
    d_prev_conv: float
    d_new_conv: float
    kl_prev_conv: float
    kl_new_conv: float
    bethe_delta: float
    delta_dist: float


TRACE_COLUMNS = tuple(f.name for f in fields(TraceRecord))


def trace_metrics(g: FactorGraph, opts: RunOptions = RunOptions()):
    """Rerun RBP0L and measure every performed update against the fixed point.

    The first run provides the converged messages; the second, identical run
    is recorded and replayed to evaluate each step.
    """
    opts = RunOptions(tolerance=opts.tolerance, max_sweeps=opts.max_sweeps,
                      damping=opts.damping, schedule="rbp0l", ledger=opts.ledger)
    capacity = opts.max_sweeps * g.num_edges
    final, stats1, rec1 = run_rbp0l(g, opts, record=capacity)
    if not stats1.converged:
        raise DidNotConverge(
            f"RBP0L did not converge within {opts.max_sweeps} sweeps "
            f"({stats1.messages_computed} messages)")
    _, stats2, rec2 = run_rbp0l(g, opts, record=max(stats1.messages_performed, 1))
    if (stats2.messages_performed != stats1.messages_performed
            or not np.array_equal(rec1.edges, rec2.edges)
            or rec1.values.tobytes() != rec2.values.tobytes()):
        raise RuntimeError("second RBP0L run diverged from the first")

    msgs = init_uniform(g)
    bethe = BetheTracker(g, msgs)
    records = []
    for step, (e, new) in enumerate(rec2.steps(g)):
        old = msgs[e].copy()
        conv = final[e]
        r_prev = residual(old, conv)
        r_new = residual(new, conv)
        msgs[e][:] = new
        records.append(TraceRecord(
            step=step, edge=e,
            r_step=residual(old, new), d_step=dynamic_range(old, new),
            kl_step=message_kl(old, new),
            r_prev_conv=r_prev, r_new_conv=r_new,
            d_prev_conv=dynamic_range(old, conv), d_new_conv=dynamic_range(new, conv),
            kl_prev_conv=message_kl(old, conv), kl_new_conv=message_kl(new, conv),
            bethe_delta=bethe.refresh(e),
            delta_dist=r_new - r_prev,
        ))
    if not np.array_equal(msgs.values, final.values):
        raise RuntimeError("replayed trace does not end at the converged messages")
    return records


def trace_csv(records: Sequence[TraceRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for rec in records:
        w.writerow([_fmt(x) for x in astuple(rec)])
    return buf.getvalue()
