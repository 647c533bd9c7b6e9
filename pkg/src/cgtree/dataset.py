"""Tabular classification data: CSV loading, categorical encoding, splits."""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

KINDS = ("numeric", "ordinal", "categorical")


class DataError(ValueError):
    """Malformed input data (bad row, empty file, inconsistent schema)."""


class UnknownCategoryError(DataError):
    pass


@dataclass
class Schema:
    feature_names: list[str]
    feature_kinds: list[str]
    target_column: int
    ordinal_levels: dict[str, list[str]] = field(default_factory=dict)
    header: bool = True

    def __post_init__(self):
        if not self.feature_names:
            raise DataError("schema needs at least one feature")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("feature names must be unique")
        if len(self.feature_kinds) != len(self.feature_names):
            raise DataError("one kind per feature required")
        for kind in self.feature_kinds:
            if kind not in KINDS:
                raise DataError(f"unknown feature kind {kind!r}")
        n_cols = len(self.feature_names) + 1
        if not 0 <= self.target_column < n_cols:
            raise DataError(f"target column {self.target_column} outside 0..{n_cols - 1}")
        for name, kind in zip(self.feature_names, self.feature_kinds):
            if kind == "ordinal" and name not in self.ordinal_levels:
                raise DataError(f"ordinal feature {name!r} has no declared levels")

    @property
    def n_columns(self) -> int:
        return len(self.feature_names) + 1

    @classmethod
    def read(cls, path: str | Path) -> "Schema":
        """Read a sidecar schema file.

        Format (INI-style key/value)::

            [schema]
            target_column = 4
            header = true

            [features]
            sepal_length = numeric
            safety = ordinal: low, med, high
            colour = categorical
        """
        cp = configparser.ConfigParser()
        cp.optionxform = str  # keep feature-name case
        if not cp.read(path, encoding="utf-8"):
            raise DataError(f"cannot read schema file {path}")
        sec = cp["schema"] if cp.has_section("schema") else {}
        names, kinds, levels = [], [], {}
        for name, spec in cp.items("features"):
            kind, _, rest = spec.partition(":")
            kind = kind.strip()
            names.append(name)
            kinds.append(kind)
            if kind == "ordinal":
                levels[name] = [v.strip() for v in rest.split(",") if v.strip()]
        target = int(sec.get("target_column", len(names)))
        header = str(sec.get("header", "true")).lower() in ("1", "true", "yes")
        return cls(names, kinds, target, levels, header)


@dataclass
class Encoder:
    """Maps raw CSV cells to the numeric feature matrix.

    Built once from the training file and reused for later files so that an
    unseen category is reported rather than silently remapped.
    """

    schema: Schema
    categories: dict[int, list[str]]
    class_labels: list[str]

    @property
    def feature_names(self) -> list[str]:
        out = []
        for i, (name, kind) in enumerate(zip(self.schema.feature_names, self.schema.feature_kinds)):
            if kind == "categorical":
                out.extend(f"{name}={c}" for c in self.categories[i])
            else:
                out.append(name)
        return out

    def encode(self, raw: Sequence[Sequence[str]], line_numbers: Sequence[int] | None = None) -> np.ndarray:
        rows = []
        tc = self.schema.target_column
        for n, cells in enumerate(raw):
            line = line_numbers[n] if line_numbers is not None else n + 1
            feats = [c for i, c in enumerate(cells) if i != tc]
            rows.append(self._encode_row(feats, line))
        return np.array(rows, dtype=float).reshape(len(rows), len(self.feature_names))

    def _encode_row(self, feats: Sequence[str], line: int) -> list[float]:
        out: list[float] = []
        for i, (name, kind) in enumerate(zip(self.schema.feature_names, self.schema.feature_kinds)):
            cell = feats[i].strip()
            if cell == "" or cell == "?":
                raise DataError(f"line {line}: missing value for {name!r}")
            if kind == "numeric":
                try:
                    out.append(float(cell))
                except ValueError:
                    raise DataError(f"line {line}: {cell!r} is not numeric ({name})") from None
            elif kind == "ordinal":
                levels = self.schema.ordinal_levels[name]
                if cell not in levels:
                    raise UnknownCategoryError(f"line {line}: unknown level {cell!r} for {name!r}")
                out.append(float(levels.index(cell)))
            else:
                cats = self.categories[i]
                if cell not in cats:
                    raise UnknownCategoryError(f"line {line}: unknown category {cell!r} for {name!r}")
                out.extend(1.0 if c == cell else 0.0 for c in cats)
        return out

    def encode_targets(self, labels: Sequence[str]) -> np.ndarray:
        ids = []
        for lab in labels:
            lab = lab.strip()
            if lab not in self.class_labels:
                raise UnknownCategoryError(f"unknown class label {lab!r}")
            ids.append(self.class_labels.index(lab))
        return np.array(ids, dtype=np.int64)

    def decode_categorical(self, values: np.ndarray, feature: str) -> list[str]:
        """Recover category strings from the one-hot block of ``feature``."""
        i = self.schema.feature_names.index(feature)
        names = self.feature_names
        start = names.index(f"{feature}={self.categories[i][0]}")
        block = values[:, start:start + len(self.categories[i])]
        return [self.categories[i][int(j)] for j in np.argmax(block, axis=1)]


@dataclass
class Dataset:
    values: np.ndarray
    targets: np.ndarray
    n_classes: int
    feature_names: list[str] | None = None
    class_labels: list[str] | None = None
    encoder: Encoder | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        self.targets = np.asarray(self.targets, dtype=np.int64)
        if self.values.ndim != 2 or self.values.shape[1] < 1:
            raise DataError("values must be a 2-D matrix with at least one feature")
        if len(self.targets) != len(self.values):
            raise DataError("one target per row required")
        if self.n_classes < 2:
            raise DataError("need at least two classes")
        if len(self.targets) and (self.targets.min() < 0 or self.targets.max() >= self.n_classes):
            raise DataError("target id out of range")
        if np.isnan(self.values).any():
            raise DataError("missing values are not supported")
        if self.feature_names is None:
            self.feature_names = [f"f{i}" for i in range(self.n_features)]

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.values[rows], self.targets[rows], self.n_classes,
                       self.feature_names, self.class_labels, self.encoder)


@dataclass(frozen=True)
class SplitPartition:
    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]
    unused_indices: tuple[int, ...]
    seed: int


def _read_cells(path: Path) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    return rows


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def infer_schema(path: str | Path, *, header: bool = True, target_column: int = -1) -> Schema:
    """Numeric if every cell of a column parses as a number, else categorical."""
    rows = _read_cells(Path(path))
    n_cols = len(rows[0])
    names = [c.strip() for c in rows[0]] if header else [f"c{i}" for i in range(n_cols)]
    body = rows[1:] if header else rows
    tc = target_column % n_cols
    feat_names, kinds = [], []
    for i in range(n_cols):
        if i == tc:
            continue
        numeric = all(_is_number(r[i]) for r in body if i < len(r))
        feat_names.append(names[i])
        kinds.append("numeric" if numeric else "categorical")
    return Schema(feat_names, kinds, tc, header=header)


def load_csv(path: str | Path, schema: Schema | None = None, *, encoder: Encoder | None = None,
             header: bool = True, target_column: int = -1) -> Dataset:
    """Load a CSV file into a numeric :class:`Dataset`.

    Categorical features are one-hot expanded, ordinal ones mapped to their
    level index, and class labels numbered by first appearance. Passing the
    ``encoder`` of a previously loaded dataset reuses its category and class
    maps (unknown values then raise :class:`UnknownCategoryError`).
    """
    path = Path(path)
    if encoder is not None:
        schema = encoder.schema
    elif schema is None:
        schema = infer_schema(path, header=header, target_column=target_column)
    rows = _read_cells(path)
    start = 1 if schema.header else 0
    body, lines = rows[start:], list(range(start + 1, len(rows) + 1))
    if not body:
        raise DataError(f"{path}: no data rows")
    for cells, line in zip(body, lines):
        if len(cells) != schema.n_columns:
            raise DataError(f"{path}: line {line} has {len(cells)} fields, expected {schema.n_columns}")
    tc = schema.target_column
    labels = [r[tc].strip() for r in body]
    if encoder is None:
        class_labels = list(dict.fromkeys(labels))
        categories = {}
        for i, kind in enumerate(schema.feature_kinds):
            if kind == "categorical":
                col = i if i < tc else i + 1
                categories[i] = sorted({r[col].strip() for r in body})
        encoder = Encoder(schema, categories, class_labels)
    values = encoder.encode(body, lines)
    targets = encoder.encode_targets(labels)
    return Dataset(values, targets, len(encoder.class_labels), encoder.feature_names,
                   list(encoder.class_labels), encoder)


def split_train_test(d: Dataset, seed: int, train_frac: float = 0.5, test_frac: float = 0.25) -> SplitPartition:
    if d.n_rows < 4:
        raise DataError("need at least 4 rows to split")
    perm = np.random.default_rng(seed).permutation(d.n_rows)
    n_train = math.floor(train_frac * d.n_rows)
    n_test = math.floor(test_frac * d.n_rows)
    return SplitPartition(
        tuple(int(i) for i in perm[:n_train]),
        tuple(int(i) for i in perm[n_train:n_train + n_test]),
        tuple(int(i) for i in perm[n_train + n_test:]),
        seed,
    )


def class_histogram(d: Dataset, rows=None) -> np.ndarray:
    targets = d.targets if rows is None else d.targets[np.asarray(rows, dtype=np.int64)]
    return np.bincount(targets, minlength=d.n_classes).astype(np.int64)


def synthetic_dataset(n_rows: int, n_features: int = 8, n_classes: int = 3, *, depth: int = 3,
                      noise: float = 0.1, seed: int = 0) -> Dataset:
    """Rows labelled by a random hidden tree of ``depth``, with a fraction relabelled at random.

    Features are uniform on [0, 1] rounded to three decimals, so each has
    at most 1001 distinct thresholds.
    """
    rng = np.random.default_rng(seed)
    X = np.round(rng.random((n_rows, n_features)), 3)
    n_int = 2 ** depth - 1
    feats = rng.integers(n_features, size=n_int)
    thr = np.round(rng.uniform(0.2, 0.8, size=n_int), 3)
    leaf_class = rng.integers(n_classes, size=2 ** depth)
    node = np.zeros(n_rows, dtype=np.int64)
    for _ in range(depth):
        go_left = X[np.arange(n_rows), feats[node]] <= thr[node]
        node = np.where(go_left, 2 * node + 1, 2 * node + 2)
    y = leaf_class[node - n_int]
    flip = rng.random(n_rows) < noise
    y[flip] = rng.integers(n_classes, size=int(flip.sum()))
    names = [f"x{i}" for i in range(n_features)]
    return Dataset(X, y, n_classes, names, [f"c{t}" for t in range(n_classes)])
