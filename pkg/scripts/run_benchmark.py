"""Run the full benchmark grid over the bundled datasets and print per-depth summaries.

Equivalent to ``cgtree benchmark`` with every CSV under ``data/``; kept as a
script so the whole grid can be launched with one command.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from cgtree.cli import main

DATA = Path(__file__).resolve().parents[1] / "data"


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depth", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--methods", nargs="+", default=["cart", "cart_star", "cgh"])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--time-limit", type=float, default=600.0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="results")
    return ap.parse_args(argv)


if __name__ == "__main__":
    a = parse_args()
    data = sorted(str(p) for p in DATA.glob("*.csv"))
    argv = ["benchmark", "--data", *data, "--depth", *map(str, a.depth), "--methods", *a.methods,
            "--seeds", *map(str, a.seeds), "--time-limit", str(a.time_limit), "--jobs", str(a.jobs),
            "--out", a.out]
    sys.exit(main(argv))
