"""Write the benchmark CSVs under data/.

Iris, Wine and Breast Cancer are copied from the CSV files bundled with
scikit-learn (no download). Balance Scale is generated: it is the full
5^4 grid of (left weight, left distance, right weight, right distance)
labelled by which side's torque is larger, with the class in column 0.
"""

from __future__ import annotations

import argparse
import csv
import itertools
from pathlib import Path

BUNDLED = {
    "iris": ("iris.csv", ["sepal_length", "sepal_width", "petal_length", "petal_width"]),
    "wine": ("wine_data.csv", None),
    "breast_cancer": ("breast_cancer.csv", None),
}


def bundled_dir() -> Path:
    import sklearn.datasets
    return Path(sklearn.datasets.__file__).parent / "data"


def convert_bundled(name: str, out: Path) -> None:
    src, names = BUNDLED[name]
    with open(bundled_dir() / src, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n_features = int(header[1])
    labels = header[2:]
    names = names or [f"x{i}" for i in range(n_features)]
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["class"])
        for r in body:
            w.writerow(r[:n_features] + [labels[int(r[n_features])]])


def write_balance_scale(out: Path) -> None:
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "left_weight", "left_distance", "right_weight", "right_distance"])
        for lw, ld, rw, rd in itertools.product(range(1, 6), repeat=4):
            left, right = lw * ld, rw * rd
            w.writerow(["L" if left > right else "B" if left == right else "R", lw, ld, rw, rd])
    out.with_suffix(".schema").write_text(
        "[schema]\ntarget_column = 0\n\n[features]\n"
        "left_weight = numeric\nleft_distance = numeric\nright_weight = numeric\nright_distance = numeric\n")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "data")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name in BUNDLED:
        convert_bundled(name, args.out / f"{name}.csv")
    write_balance_scale(args.out / "balance_scale.csv")
    for p in sorted(args.out.glob("*.csv")):
        print(p)


if __name__ == "__main__":
    main()
