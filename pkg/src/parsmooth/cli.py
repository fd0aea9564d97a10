"""Command-line harness: simulate | run | bench | report | verify."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import bench
from .pkf import parallel_filter, parallel_loglik
from .prts import parallel_smoother
from .sequential import _check_measurements, kalman_filter, rts_smoother
from .ssm import LGSSM, make_tracking_model, simulate


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def load_model(source: str, n: int) -> LGSSM:
    """``tracking`` or a JSON file holding a model (or a data file with one)."""
    if source == "tracking":
        return make_tracking_model(n=n)
    try:
        with open(source) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read model file {source}: {exc.strerror}") from None
    model = LGSSM.from_dict(doc.get("model", doc))
    return model.with_steps(n) if model.stationary and n != model.n else model


def _write_text(path: str, text: str) -> None:
    try:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None


def cmd_simulate(args) -> int:
    n = args.n[0] if args.n else 100
    if n < 1:
        raise UsageError(f"--n must be >= 1, got {n}")
    model = load_model(args.model, n)
    sim = simulate(model, args.seed)
    doc = {
        "model": model.to_dict(),
        "states": sim.states.tolist(),
        "measurements": sim.measurements.tolist(),
        "seed": args.seed,
    }
    path = os.path.join(args.out, "data.json")
    _write_text(path, json.dumps(doc, sort_keys=True) + "\n")
    print(path)
    return 0


def load_data(path: str, model_source: str | None = None) -> tuple[LGSSM, np.ndarray]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read data file {path}: {exc.strerror}") from None
    ys = np.asarray(doc["measurements"], dtype=float)
    if model_source and model_source != "tracking":
        model = load_model(model_source, len(ys))
    elif model_source == "tracking":
        model = make_tracking_model(n=len(ys))
    else:
        model = LGSSM.from_dict(doc["model"])
    try:
        _check_measurements(model, ys)
    except ValueError as exc:
        raise UsageError(f"model/data mismatch in {path}: {exc}") from None
    return model, ys


def results_table(model: LGSSM, ys: np.ndarray, algorithm: str, block: int = 1, workers: int = 1):
    """Per-step rows ``k, mean_*, cov_*_*`` (plus ``loglik`` for filters)."""
    loglik = None
    if algorithm == "kf":
        run = kalman_filter(model, ys)
        moments, loglik = run.filtered, run.loglik_prefix
    elif algorithm == "pkf":
        moments = parallel_filter(model, ys, block, workers).filtered
        loglik = parallel_loglik(model, moments, ys, workers).prefix
    elif algorithm == "rts":
        moments = rts_smoother(model, kalman_filter(model, ys))
    elif algorithm == "prts":
        filtered = parallel_filter(model, ys, block, workers).filtered
        moments = parallel_smoother(model, filtered, block, workers).smoothed
    else:
        raise UsageError(f"unknown algorithm {algorithm!r}")
    nx = model.n_x
    header = ["k"] + [f"mean_{i}" for i in range(nx)] + \
        [f"cov_{i}_{j}" for i in range(nx) for j in range(nx)]
    if loglik is not None:
        header.append("loglik")
    rows = []
    for k, mom in enumerate(moments, start=1):
        row = [k, *mom.mean.tolist(), *mom.cov.ravel().tolist()]
        if loglik is not None:
            row.append(float(loglik[k - 1]))
        rows.append(row)
    return header, rows


def cmd_run(args) -> int:
    data = args.data or os.path.join(args.out, "data.json")
    model, ys = load_data(data, args.model if args.model_given else None)
    block = (args.block or [1])[0]
    header, rows = results_table(model, ys, args.algorithm, min(block, model.n), args.threads)
    path = os.path.join(args.out, f"{args.algorithm}.csv")
    os.makedirs(args.out, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows([[repr(v) if isinstance(v, float) else v for v in r] for r in rows])
    print(path)
    return 0


def cmd_bench(args) -> int:
    ns = args.n or list(bench.DEFAULT_SWEEP)
    if any(n < 1 for n in ns):
        raise UsageError("--n values must be >= 1")
    if any(b < 1 for b in (args.block or [1])):
        raise UsageError("--block values must be >= 1")
    model = load_model(args.model, ns[0])
    records = bench.run_bench(model, ns, seeds=[args.seed], blocks=args.block or [1],
                              workers=args.threads)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "bench.csv")
    bench.write_csv(records, path)
    print(path)
    return 0


def cmd_report(args) -> int:
    path = args.csv or os.path.join(args.out, "bench.csv")
    try:
        records = bench.read_csv(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    if not records:
        raise UsageError(f"{path}: no benchmark rows")
    summary = bench.render_report(records, args.out)
    for label, info in summary.items():
        print(f"{label}: work ratio {info['asymptotic_work_ratio']:.2f}, "
              f"span crossover n={info['crossover_n']}")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_all
    results = run_all()
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default=None,
                        help="'tracking' (default) or path to a model/data JSON file")
    common.add_argument("--n", type=_int_list, default=None, help="step count(s), comma separated")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--block", type=_int_list, default=None, help="block length(s), comma separated")
    common.add_argument("--threads", type=int, default=1, help="worker threads per scan level")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="parsmooth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate a trajectory to data.json")
    p = sub.add_parser("run", parents=[common], help="run one algorithm on a data file")
    p.add_argument("--algorithm", choices=bench.ALGORITHMS, required=True)
    p.add_argument("--data", default=None, help="data file (default <out>/data.json)")
    sub.add_parser("bench", parents=[common], help="flop sweep to bench.csv")
    p = sub.add_parser("report", parents=[common], help="plots and summary from bench.csv")
    p.add_argument("--csv", default=None, help="bench CSV (default <out>/bench.csv)")
    sub.add_parser("verify", parents=[common], help="run the verification suite")
    return parser


COMMANDS = {"simulate": cmd_simulate, "run": cmd_run, "bench": cmd_bench,
            "report": cmd_report, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.model_given = args.model is not None
    args.model = args.model or "tracking"
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ValueError, OSError) as exc:
        print(f"parsmooth: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
