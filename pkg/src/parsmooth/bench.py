"""Flop benchmarks and reports for the sequential and parallel algorithms.

Bench CSV columns: ``n,algorithm,work_flops,span_flops,wall_time_ns,block_l,seed``.
For the sequential algorithms span equals work. Smoother rows count only
the backward pass; both smoothers consume Kalman filter output.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from collections import defaultdict
from dataclasses import astuple, dataclass, fields
from typing import Iterable, Sequence

from .numkernel import FlopLedger
from .pkf import parallel_filter
from .prts import parallel_smoother
from .sequential import kalman_filter, rts_smoother
from .ssm import LGSSM, simulate

log = logging.getLogger(__name__)

ALGORITHMS = ("kf", "pkf", "rts", "prts")
PAIRS = {"filter": ("kf", "pkf"), "smoother": ("rts", "prts")}
DEFAULT_SWEEP = tuple(2**p for p in range(4, 15))


@dataclass(frozen=True)
class BenchRecord:
    n: int
    algorithm: str
    work_flops: int
    span_flops: int
    wall_time_ns: int
    block_l: int
    seed: int

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.span_flops > self.work_flops:
            raise ValueError(f"span {self.span_flops} exceeds work {self.work_flops}")


CSV_COLUMNS = [f.name for f in fields(BenchRecord)]


def bench_one(model: LGSSM, seed: int, blocks: Sequence[int] = (1,), workers: int = 1) -> list[BenchRecord]:
    n = model.n
    ys = simulate(model, seed).measurements
    out = []

    led = FlopLedger()
    t0 = time.perf_counter_ns()
    run = kalman_filter(model, ys, led)
    out.append(BenchRecord(n, "kf", led.total, led.total, time.perf_counter_ns() - t0, 1, seed))

    led = FlopLedger()
    t0 = time.perf_counter_ns()
    rts_smoother(model, run, led)
    out.append(BenchRecord(n, "rts", led.total, led.total, time.perf_counter_ns() - t0, 1, seed))

    for block in blocks:
        block = min(block, n)
        t0 = time.perf_counter_ns()
        rep = parallel_filter(model, ys, block, workers).report
        out.append(BenchRecord(n, "pkf", rep.work_flops, rep.span_flops,
                               time.perf_counter_ns() - t0, block, seed))
        t0 = time.perf_counter_ns()
        rep = parallel_smoother(model, run.filtered, block, workers).report
        out.append(BenchRecord(n, "prts", rep.work_flops, rep.span_flops,
                               time.perf_counter_ns() - t0, block, seed))
    return out


def run_bench(model: LGSSM, ns: Iterable[int], seeds: Iterable[int] = (0,),
              blocks: Sequence[int] = (1,), workers: int = 1) -> list[BenchRecord]:
    records = []
    for n in ns:
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        for seed in seeds:
            log.info("bench n=%d seed=%d", n, seed)
            records.extend(bench_one(model.with_steps(n), seed, blocks, workers))
    return records


def write_csv(records: Sequence[BenchRecord], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        w.writerows(astuple(r) for r in records)


class BenchCsvError(ValueError):
    pass


def read_csv(path: str) -> list[BenchRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CSV_COLUMNS:
        raise BenchCsvError(f"{path}:1: expected header {','.join(CSV_COLUMNS)}")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CSV_COLUMNS):
            raise BenchCsvError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
        try:
            records.append(BenchRecord(int(row[0]), row[1], *(int(v) for v in row[2:])))
        except ValueError as exc:
            raise BenchCsvError(f"{path}:{lineno}: {exc}") from None
    return records


def _mean_by_n(records, algorithm, block_l=None):
    acc = defaultdict(list)
    for r in records:
        if r.algorithm == algorithm and (block_l is None or r.block_l == block_l):
            acc[r.n].append((r.work_flops, r.span_flops))
    return {n: (sum(w for w, _ in v) / len(v), sum(s for _, s in v) / len(v))
            for n, v in sorted(acc.items())}


def summarize(records: Sequence[BenchRecord]) -> dict:
    """Work ratios, span crossover and span growth per algorithm pair.

    Parallel rows with the smallest recorded block length are used.
    ``crossover_n`` is the smallest swept ``n`` from which the parallel span
    stays below the sequential work for every larger swept ``n``.
    """
    if not records:
        raise ValueError("no benchmark records to summarise")
    summary = {}
    for label, (seq, par) in PAIRS.items():
        par_blocks = sorted({r.block_l for r in records if r.algorithm == par})
        s = _mean_by_n(records, seq)
        p = _mean_by_n(records, par, par_blocks[0] if par_blocks else None)
        ns = sorted(set(s) & set(p))
        if not ns:
            continue
        ratio = {n: p[n][0] / s[n][0] for n in ns}
        crossover = None
        for n in reversed(ns):
            if p[n][1] < s[n][0]:
                crossover = n
            else:
                break
        growth = {n: p[2 * n][1] / p[n][1] for n in ns if 2 * n in p}
        summary[label] = {
            "sequential": seq,
            "parallel": par,
            "block_l": par_blocks[0],
            "n": ns,
            "work_ratio": {str(n): ratio[n] for n in ns},
            "asymptotic_work_ratio": ratio[ns[-1]],
            "crossover_n": crossover,
            "span_growth": {str(n): g for n, g in growth.items()},
        }
    return summary


def render_report(records: Sequence[BenchRecord], out_dir: str) -> dict:
    """Write ``summary.json`` and log-log SVG plots; returns the summary."""
    summary = summarize(records)
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    titles = {"filter": "kf_flops.svg", "smoother": "rts_flops.svg"}
    for label, info in summary.items():
        seq, par = info["sequential"], info["parallel"]
        s = _mean_by_n(records, seq)
        p = _mean_by_n(records, par, info["block_l"])
        ns = info["n"]
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.loglog(ns, [s[n][0] for n in ns], "o-", label=f"{seq.upper()} flops")
        ax.loglog(ns, [p[n][1] for n in ns], "s-", label=f"{par.upper()} span flops")
        ax.loglog(ns, [p[n][0] for n in ns], "^-", label=f"{par.upper()} work flops")
        ax.set_xlabel("number of time steps n")
        ax.set_ylabel("flops")
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, titles[label]), format="svg")
        plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 4))
    for label, info in summary.items():
        ns = info["n"]
        ax.semilogx(ns, [info["work_ratio"][str(n)] for n in ns], "o-",
                    label=f"{info['parallel'].upper()} / {info['sequential'].upper()}")
    ax.set_xlabel("number of time steps n")
    ax.set_ylabel("work flop ratio")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "work_ratio.svg"), format="svg")
    plt.close(fig)

    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary
