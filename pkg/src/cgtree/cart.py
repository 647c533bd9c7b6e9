"""Greedy CART trees with observed-value thresholds, plus the CART* tuning grid."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import Dataset
from .tree import RowSet, Split

CRITERIA = ("gini", "entropy")
# relative tolerance used to treat two impurity scores as tied
TIE_EPS = 1e-12


@dataclass(frozen=True)
class CartParams:
    """CART hyperparameters.

    ``min_samples_split`` and ``min_leaf_fraction`` are fractions of the rows
    the tree is grown on; ``None`` means the library defaults of 2 rows to
    split and 1 row per leaf.
    """

    max_depth: int = 2
    criterion: str = "gini"
    min_samples_split: float | None = None
    min_leaf_fraction: float | None = None
    class_weight: str | None = None

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")
        for frac in (self.min_samples_split, self.min_leaf_fraction):
            if frac is not None and not 0 < frac <= 1:
                raise ValueError("fractions must lie in (0, 1]")
        if self.class_weight not in (None, "balanced"):
            raise ValueError("class_weight must be None or 'balanced'")

    def min_split_rows(self, n_total: int) -> int:
        if self.min_samples_split is None:
            return 2
        return max(2, math.ceil(self.min_samples_split * n_total))

    def min_leaf_rows(self, n_total: int) -> int:
        if self.min_leaf_fraction is None:
            return 1
        return max(1, math.ceil(self.min_leaf_fraction * n_total))


@dataclass
class CartTree:
    """A grown CART tree in heap-ordered node ids; may stop short of ``max_depth``.

    ``splits`` holds internal nodes only, ``targets`` holds the weighted
    majority class of every present node (internal nodes included).
    """

    max_depth: int
    splits: dict[int, Split] = field(default_factory=dict)
    targets: dict[int, int] = field(default_factory=dict)

    @property
    def depth(self) -> int:
        if not self.splits:
            return 0
        return max((j + 1).bit_length() for j in self.splits)

    def leaves(self) -> list[int]:
        return sorted(j for j in self.targets if j not in self.splits)

    def predict(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        node = np.zeros(len(values), dtype=np.int64)
        for _ in range(self.depth):
            nxt = node.copy()
            for j in np.unique(node):
                s = self.splits.get(int(j))
                if s is None:
                    continue
                sel = node == j
                left = values[sel, s.feature] <= s.threshold
                nxt[sel] = np.where(left, 2 * j + 1, 2 * j + 2)
            node = nxt
        return np.array([self.targets[int(j)] for j in node], dtype=np.int64)

    def accuracy(self, d: Dataset, rows=None) -> float:
        idx = _indices(rows, d.n_rows)
        return float(np.mean(self.predict(d.values[idx]) == d.targets[idx]))


def _indices(rows, n: int) -> np.ndarray:
    if rows is None:
        return np.arange(n)
    if isinstance(rows, RowSet):
        return rows.indices()
    return np.asarray(rows, dtype=np.int64)


def _impurity_matrix(wc: np.ndarray, criterion: str) -> np.ndarray:
    """Impurity of each row of a (n_candidates, n_classes) weighted-count matrix."""
    tot = wc.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(tot > 0, wc / tot, 0.0)
    if criterion == "gini":
        return 1.0 - np.sum(p * p, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -np.sum(p * logs, axis=-1)


def impurity(counts: Sequence[float], criterion: str = "gini", weights: Sequence[float] | None = None) -> float:
    counts = np.asarray(counts, dtype=float)
    if (counts < 0).any():
        raise ValueError("counts must be nonnegative")
    wc = counts if weights is None else counts * np.asarray(weights, dtype=float)
    if wc.sum() <= 0:
        raise ValueError("impurity of an empty node is undefined")
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    return max(0.0, float(_impurity_matrix(wc[None, :], criterion)[0]))


def balanced_weights(targets: np.ndarray, n_classes: int) -> np.ndarray:
    counts = np.bincount(targets, minlength=n_classes).astype(float)
    present = np.count_nonzero(counts)
    w = np.ones(n_classes)
    nz = counts > 0
    w[nz] = len(targets) / (present * counts[nz])
    return w


def best_split(d: Dataset, rows, params: CartParams = CartParams(), *,
               n_total: int | None = None, class_weights: np.ndarray | None = None) -> Split | None:
    """Best (feature, observed threshold) split of ``rows`` or ``None``.

    Minimises the child-weight-averaged impurity. Equal scores are broken
    towards the lowest feature index, then the lowest threshold.
    """
    idx = _indices(rows, d.n_rows)
    n = len(idx)
    n_total = n if n_total is None else n_total
    if n < params.min_split_rows(n_total) or n < 2:
        return None
    y = d.targets[idx]
    if np.count_nonzero(np.bincount(y, minlength=d.n_classes)) <= 1:
        return None
    cw = np.ones(d.n_classes) if class_weights is None else class_weights
    w = cw[y]
    total = np.bincount(y, weights=w, minlength=d.n_classes)
    wtot = total.sum()
    min_leaf = params.min_leaf_rows(n_total)
    if 2 * min_leaf > n:
        return None
    X = d.values[idx]
    order = np.argsort(X, axis=0, kind="stable")              # (n, F)
    vs = np.take_along_axis(X, order, axis=0)
    onehot = np.zeros((n, d.n_features, d.n_classes))
    onehot[np.arange(n)[:, None], np.arange(d.n_features)[None, :], y[order]] = w[order]
    left = np.cumsum(onehot, axis=0)[:-1]                      # (n-1, F, T) counts left of each cut
    pos = np.arange(n - 1)[:, None]
    ok = (vs[:-1] < vs[1:]) & (pos + 1 >= min_leaf) & (n - pos - 1 >= min_leaf)
    if not ok.any():
        return None
    pi, fi = np.nonzero(ok)
    left = left[pi, fi]
    wl = left.sum(axis=1)
    score = (wl * _impurity_matrix(left, params.criterion)
             + (wtot - wl) * _impurity_matrix(total - left, params.criterion)) / wtot
    tied = np.flatnonzero(score <= score.min() + TIE_EPS)
    # lowest feature first, then lowest threshold
    thr = vs[pi[tied], fi[tied]]
    best = tied[np.lexsort((thr, fi[tied]))[0]]
    return Split(int(fi[best]), float(vs[pi[best], fi[best]]))


def _majority(y: np.ndarray, cw: np.ndarray, n_classes: int) -> int:
    if len(y) == 0:
        return 0
    return int(np.argmax(np.bincount(y, weights=cw[y], minlength=n_classes)))


def build(d: Dataset, rows=None, params: CartParams = CartParams()) -> CartTree:
    """Grow a CART tree on ``rows`` until depth, purity or size rules stop it."""
    idx = _indices(rows, d.n_rows)
    if len(idx) == 0:
        raise ValueError("cannot grow a tree on zero rows")
    n_total = len(idx)
    cw = balanced_weights(d.targets[idx], d.n_classes) if params.class_weight == "balanced" else np.ones(d.n_classes)
    tree = CartTree(params.max_depth)
    stack = [(0, idx, 0)]
    while stack:
        node, nidx, depth = stack.pop()
        tree.targets[node] = _majority(d.targets[nidx], cw, d.n_classes)
        if depth >= params.max_depth:
            continue
        s = best_split(d, nidx, params, n_total=n_total, class_weights=cw)
        if s is None:
            continue
        tree.splits[node] = s
        left = d.values[nidx, s.feature] <= s.threshold
        stack.append((2 * node + 2, nidx[~left], depth + 1))
        stack.append((2 * node + 1, nidx[left], depth + 1))
    return tree


GRID = {
    "criterion": ("gini", "entropy"),
    "min_samples_split": (0.02, 0.05, 0.1, 0.2),
    "class_weight": (None, "balanced"),
    "min_leaf_fraction": (0.01, 0.05, 0.1, 0.2, 1.0),
}


def cart_star_grid(max_depth: int) -> list[CartParams]:
    return [CartParams(max_depth, crit, mss, mlf, cw)
            for crit, mss, cw, mlf in itertools.product(*GRID.values())]


def stratified_folds(targets: np.ndarray, n_folds: int) -> np.ndarray:
    """Fold id per row; each class is dealt round-robin in row order."""
    fold = np.empty(len(targets), dtype=np.int64)
    offset = 0
    for t in np.unique(targets):
        members = np.flatnonzero(targets == t)
        fold[members] = (np.arange(len(members)) + offset) % n_folds
        offset += len(members)
    return fold


def cross_val_accuracy(d: Dataset, idx: np.ndarray, params: CartParams, folds: np.ndarray, n_folds: int) -> float:
    scores = []
    for k in range(n_folds):
        test = idx[folds == k]
        train = idx[folds != k]
        if len(test) == 0 or len(train) == 0:
            continue
        scores.append(build(d, train, params).accuracy(d, test))
    return float(np.mean(scores))


def tune_cart_star(d: Dataset, rows, max_depth: int, *, n_folds: int = 10,
                   log: list | None = None) -> tuple[CartParams, CartTree]:
    """Exhaustive 80-cell grid search scored by 10-fold CV accuracy, then refit.

    Each evaluated ``(params, score)`` pair is appended to ``log`` when given.
    Ties keep the earliest grid cell.
    """
    idx = _indices(rows, d.n_rows)
    if len(idx) < 2 * n_folds:
        raise ValueError(f"need at least {2 * n_folds} rows for {n_folds}-fold CV")
    folds = stratified_folds(d.targets[idx], n_folds)
    best_params, best_score = None, -1.0
    for params in cart_star_grid(max_depth):
        score = cross_val_accuracy(d, idx, params, folds, n_folds)
        if log is not None:
            log.append((params, score))
        if score > best_score + 1e-12:
            best_params, best_score = params, score
    return best_params, build(d, idx, best_params)


def with_depth(params: CartParams, depth: int) -> CartParams:
    return replace(params, max_depth=depth)
