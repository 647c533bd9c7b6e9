"""Command-line entry points: train one model, run the benchmark grid, dump sampled splits."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cart import CartParams, CartTree, build, tune_cart_star
from .dataset import DataError, Dataset, Schema, load_csv, split_train_test
from .driver import CghConfig, evaluate, run_cgh
from .sampling import SamplingParams, run_threshold_sampling

log = logging.getLogger("cgtree")

METHODS = ("cart", "cart_star", "cgh")
REPORT_FIELDS = ("dataset", "depth", "seed", "method", "status", "train_accuracy", "test_accuracy",
                 "wall_time", "termination", "lp_integral", "lp_bound", "error")


def load_dataset(path: str | Path, schema: str | Path | None = None) -> Dataset:
    """Load ``path``, using ``schema`` or a ``<stem>.schema`` sidecar when present."""
    path = Path(path)
    if schema is None and path.with_suffix(".schema").exists():
        schema = path.with_suffix(".schema")
    return load_csv(path, Schema.read(schema) if schema is not None else None)


def time_limit(args) -> float:
    env = os.environ.get("CGH_TIME_LIMIT")
    if env:
        try:
            return float(env)
        except ValueError:
            raise SystemExit(f"CGH_TIME_LIMIT must be a number, got {env!r}")
    return args.time_limit


def cart_to_json(tree: CartTree) -> str:
    nodes = [{"id": j, "feature": s.feature, "threshold": float(s.threshold)} for j, s in sorted(tree.splits.items())]
    leaves = [{"id": j, "target": tree.targets[j]} for j in tree.leaves()]
    return json.dumps({"depth": tree.max_depth, "nodes": nodes, "leaves": leaves}, indent=2) + "\n"


@dataclass
class Cell:
    """Outcome of training one method on one (dataset, depth, seed) split."""

    dataset: str
    depth: int
    seed: int
    method: str
    status: str = "ok"
    train_accuracy: float = float("nan")
    test_accuracy: float = float("nan")
    wall_time: float = 0.0
    termination: str = ""
    lp_integral: str = ""
    lp_bound: str = ""
    error: str = ""
    model_json: str = ""
    run_log: str = ""

    def record(self) -> dict:
        return {f: getattr(self, f) for f in REPORT_FIELDS}


def train_cell(d: Dataset, name: str, depth: int, seed: int, method: str, limit: float,
               big_data: bool | None = None) -> Cell:
    cell = Cell(name, depth, seed, method)
    start = time.monotonic()
    try:
        part = split_train_test(d, seed)
        train, test = np.array(part.train_indices), np.array(part.test_indices)
        if method == "cart":
            tree = build(d, train, CartParams(max_depth=depth))
            cell.train_accuracy, cell.test_accuracy = tree.accuracy(d, train), tree.accuracy(d, test)
            cell.model_json = cart_to_json(tree)
        elif method == "cart_star":
            params, tree = tune_cart_star(d, train, depth)
            cell.train_accuracy, cell.test_accuracy = tree.accuracy(d, train), tree.accuracy(d, test)
            cell.model_json = cart_to_json(tree)
            cell.termination = f"{params.criterion}/{params.min_samples_split}/{params.class_weight}/{params.min_leaf_fraction}"
        elif method == "cgh":
            cfg = CghConfig(depth=depth, sampling=SamplingParams(seed=seed), seed=seed,
                            time_limit=limit, big_data=big_data)
            res = run_cgh(d, train, cfg)
            cell.train_accuracy, cell.test_accuracy = res.train_accuracy, evaluate(res, d, test)
            cell.termination = res.termination
            cell.lp_integral = str(res.lp_was_integral).lower()
            cell.lp_bound = f"{res.lp_bound:.6f}"
            cell.model_json = res.tree.to_json()
            cell.run_log = res.log_text()
        else:
            raise ValueError(f"unknown method {method!r}")
    except Exception as exc:   # recorded per cell; the run continues
        log.exception("cell %s depth %d seed %d %s failed", name, depth, seed, method)
        cell.status, cell.error = "failed", f"{type(exc).__name__}: {exc}"
    cell.wall_time = time.monotonic() - start
    return cell


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def averages(cells: list[Cell]) -> list[dict]:
    """One row per (dataset, depth, method) over the seeds that completed."""
    groups: dict[tuple, list[Cell]] = {}
    for c in cells:
        groups.setdefault((c.dataset, c.depth, c.method), []).append(c)
    out = []
    for (name, depth, method), cs in groups.items():
        ok = [c for c in cs if c.status == "ok"]
        row = dict.fromkeys(REPORT_FIELDS, "")
        row.update(dataset=name, depth=depth, seed="avg", method=method,
                   status="ok" if len(ok) == len(cs) else f"{len(ok)}/{len(cs)} ok")
        if ok:
            row["train_accuracy"] = float(np.mean([c.train_accuracy for c in ok]))
            row["test_accuracy"] = float(np.mean([c.test_accuracy for c in ok]))
            row["wall_time"] = float(np.mean([c.wall_time for c in ok]))
            flags = [c.lp_integral == "true" for c in ok if c.lp_integral]
            if flags:
                row["lp_integral"] = f"{np.mean(flags):.3f}"
        out.append(row)
    return out


def write_report(path: Path, cells: list[Cell]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        w.writeheader()
        for c in cells:
            w.writerow({k: _fmt(v) for k, v in c.record().items()})
        for row in averages(cells):
            w.writerow({k: _fmt(v) for k, v in row.items()})


def improvement_summary(cells: list[Cell]) -> list[str]:
    """Mean CGH minus CART test accuracy, in points, per depth."""
    lines = []
    by = {(c.dataset, c.depth, c.seed, c.method): c for c in cells if c.status == "ok"}
    for depth in sorted({c.depth for c in cells}):
        deltas = [by[(n, dp, s, "cgh")].test_accuracy - by[(n, dp, s, "cart")].test_accuracy
                  for (n, dp, s, m) in by if dp == depth and m == "cgh" and (n, dp, s, "cart") in by]
        if deltas:
            lines.append(f"depth {depth}: cgh - cart test accuracy {100 * np.mean(deltas):+.2f} points over {len(deltas)} runs")
    return lines


# -- subcommands -----------------------------------------------------------

def cmd_train(args) -> int:
    d = load_dataset(args.data, args.schema)
    cell = train_cell(d, Path(args.data).stem, args.depth, args.seed, args.method, time_limit(args),
                      True if args.big_data else None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if cell.status != "ok":
        print(f"error: {cell.error}", file=sys.stderr)
        write_report(out / "metrics.csv", [cell])
        return 1
    (out / "model.json").write_text(cell.model_json)
    (out / "run.log").write_text(cell.run_log)
    write_report(out / "metrics.csv", [cell])
    print(f"{cell.method} depth {cell.depth} seed {cell.seed}: train {cell.train_accuracy:.4f} "
          f"test {cell.test_accuracy:.4f} ({cell.wall_time:.1f}s) -> {out}")
    return 0


def _bench_cell(job: tuple) -> Cell:
    path, schema, depth, seed, method, limit, big = job
    return train_cell(load_dataset(path, schema), Path(path).stem, depth, seed, method, limit, big)


def cmd_benchmark(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    limit = time_limit(args)
    big = True if args.big_data else None
    for path in args.data:
        load_dataset(path, args.schema)   # fail fast on unreadable inputs
    jobs = [(p, args.schema, k, s, m, limit, big)
            for p in args.data for k in args.depth for s in args.seeds for m in args.methods]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            cells = list(pool.map(_bench_cell, jobs))
    else:
        cells = []
        for job in jobs:
            cells.append(_bench_cell(job))
            c = cells[-1]
            print(f"{c.dataset} k={c.depth} seed={c.seed} {c.method}: {c.status} "
                  f"train {c.train_accuracy:.4f} test {c.test_accuracy:.4f} {c.wall_time:.1f}s", flush=True)
    write_report(out / "report.csv", cells)
    for c in cells:
        if c.run_log:
            (out / f"{c.dataset}_k{c.depth}_s{c.seed}_{c.method}.log").write_text(c.run_log)
    for line in improvement_summary(cells):
        print(line)
    failed = [c for c in cells if c.status != "ok"]
    print(f"report: {out / 'report.csv'} ({len(cells) - len(failed)}/{len(cells)} cells ok)")
    return 0 if not failed else 1


def cmd_sample_splits(args) -> int:
    d = load_dataset(args.data, args.schema)
    part = split_train_test(d, args.seed)
    res = run_threshold_sampling(d, np.array(part.train_indices), args.depth,
                                 SamplingParams(seed=args.seed), CartParams(max_depth=args.depth))
    text = "node feature threshold freq\n" + res.dump()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "splits.txt").write_text(text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cgtree", description="Depth-k classification trees by column generation.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, multi: bool):
        p.add_argument("--data", required=True, nargs="+" if multi else None, help="CSV file(s)")
        p.add_argument("--schema", help="schema sidecar (default: <data>.schema when present)")
        p.add_argument("--time-limit", type=float, default=600.0, help="seconds per CGH run")
        p.add_argument("--big-data", action="store_true", help="heuristic pricing only")
        p.add_argument("--out", default="out", help="output directory")

    t = sub.add_parser("train", help="train one model on a seeded 50/25 split")
    common(t, False)
    t.add_argument("--depth", type=int, default=2, choices=range(1, 7), metavar="K")
    t.add_argument("--method", choices=METHODS, default="cgh")
    t.add_argument("--seed", type=int, default=1)
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("benchmark", help="all methods over datasets, depths and seeds")
    common(b, True)
    b.add_argument("--depth", type=int, nargs="+", default=[2, 3, 4], metavar="K")
    b.add_argument("--method", "--methods", dest="methods", nargs="+", choices=METHODS, default=["cart", "cgh"])
    b.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    b.add_argument("--jobs", type=int, default=1)
    b.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("sample-splits", help="run threshold sampling and dump the split sets")
    common(s, False)
    s.add_argument("--depth", type=int, default=2, choices=range(1, 7), metavar="K")
    s.add_argument("--seed", type=int, default=1)
    s.set_defaults(func=cmd_sample_splits)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
