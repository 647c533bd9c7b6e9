"""Depth-k binary tree model: topology, splits, decision paths, row routing.

Node ids follow heap order: root 0, children of ``j`` are ``2j+1`` (left) and
``2j+2`` (right). Internal nodes are ``0 .. 2^k-2`` and leaves
``2^k-1 .. 2^(k+1)-2``. A row goes left at a node iff ``value <= threshold``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .dataset import Dataset


class TreeError(ValueError):
    pass


class Split(NamedTuple):
    """Univariate test ``x[feature] <= threshold``."""

    feature: int
    threshold: float

    def mask(self, values: np.ndarray) -> np.ndarray:
        return values[:, self.feature] <= self.threshold

    def __str__(self) -> str:
        return f"x[{self.feature}] <= {self.threshold:.6g}"


@dataclass(frozen=True)
class Topology:
    depth: int

    def __post_init__(self):
        if self.depth < 1:
            raise TreeError("depth must be >= 1")

    @property
    def n_internal(self) -> int:
        return 2 ** self.depth - 1

    @property
    def n_leaves(self) -> int:
        return 2 ** self.depth

    @property
    def internal_nodes(self) -> range:
        return range(self.n_internal)

    @property
    def leaves(self) -> range:
        return range(self.n_internal, 2 * self.n_internal + 1)

    def is_leaf(self, node: int) -> bool:
        return node >= self.n_internal

    def level(self, node: int) -> int:
        return (node + 1).bit_length() - 1

    def leaf_index(self, leaf: int) -> int:
        return leaf - self.n_internal

    def path(self, leaf: int) -> tuple[int, ...]:
        """Internal nodes from the root down to ``leaf`` (length ``depth``)."""
        return tuple(node for node, _ in self.path_directions(leaf))

    def path_directions(self, leaf: int) -> tuple[tuple[int, bool], ...]:
        """``(node, goes_left)`` pairs along the root-to-leaf route."""
        if not self.is_leaf(leaf) or leaf > 2 * self.n_internal:
            raise TreeError(f"{leaf} is not a leaf of a depth-{self.depth} tree")
        steps = []
        child = leaf
        while child > 0:
            parent = (child - 1) // 2
            steps.append((parent, child == 2 * parent + 1))
            child = parent
        return tuple(reversed(steps))

    def left_nodes(self, leaf: int) -> tuple[int, ...]:
        """LC(l): internal nodes whose left child lies on the path to ``leaf``."""
        return tuple(j for j, left in self.path_directions(leaf) if left)

    def right_nodes(self, leaf: int) -> tuple[int, ...]:
        return tuple(j for j, left in self.path_directions(leaf) if not left)

    def leaves_below(self, node: int) -> list[int]:
        lo = hi = node
        while not self.is_leaf(lo):
            lo, hi = 2 * lo + 1, 2 * hi + 2
        return list(range(lo, hi + 1))


@dataclass(frozen=True)
class RowSet:
    """Fixed-width bit set over row indices (bit ``r`` set <=> row ``r`` in set)."""

    bits: int
    width: int

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "RowSet":
        mask = np.asarray(mask, dtype=bool)
        packed = np.packbits(mask, bitorder="little")
        return cls(int.from_bytes(packed.tobytes(), "little"), len(mask))

    @classmethod
    def from_indices(cls, indices: Iterable[int], width: int) -> "RowSet":
        bits = 0
        for i in indices:
            if not 0 <= i < width:
                raise IndexError(i)
            bits |= 1 << int(i)
        return cls(bits, width)

    @classmethod
    def full(cls, width: int) -> "RowSet":
        return cls((1 << width) - 1, width)

    def to_mask(self) -> np.ndarray:
        nbytes = (self.width + 7) // 8
        raw = np.frombuffer(self.bits.to_bytes(nbytes, "little"), dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little")[: self.width].astype(bool)

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.to_mask())

    def __len__(self) -> int:
        return self.bits.bit_count()

    def __iter__(self) -> Iterator[int]:
        return iter(int(i) for i in self.indices())

    def __contains__(self, r: int) -> bool:
        return bool(self.bits >> r & 1)

    def __and__(self, other: "RowSet") -> "RowSet":
        return RowSet(self.bits & other.bits, self.width)

    def __or__(self, other: "RowSet") -> "RowSet":
        return RowSet(self.bits | other.bits, self.width)

    def __sub__(self, other: "RowSet") -> "RowSet":
        return RowSet(self.bits & ~other.bits, self.width)

    def complement(self) -> "RowSet":
        return RowSet(~self.bits & ((1 << self.width) - 1), self.width)


class SplitMasks:
    """Per-split row masks over a dataset, computed once and shared.

    Holds both a boolean matrix (one row per split) for vectorised work and
    lazily built :class:`RowSet` objects for set algebra.
    """

    def __init__(self, d: Dataset, splits: Iterable[Split]):
        self.splits: list[Split] = list(dict.fromkeys(splits))
        self.index = {s: i for i, s in enumerate(self.splits)}
        self.n_rows = d.n_rows
        if self.splits:
            feats = np.array([s.feature for s in self.splits])
            thr = np.array([s.threshold for s in self.splits])
            self.matrix = (d.values[:, feats] <= thr).T.copy()
        else:
            self.matrix = np.zeros((0, d.n_rows), dtype=bool)
        self._sets: dict[int, RowSet] = {}

    def __len__(self) -> int:
        return len(self.splits)

    def rowset(self, split: Split) -> RowSet:
        i = self.index[split]
        rs = self._sets.get(i)
        if rs is None:
            rs = self._sets[i] = RowSet.from_mask(self.matrix[i])
        return rs


@dataclass(frozen=True)
class DecisionPath:
    leaf: int
    splits: tuple[Split, ...]
    target: int

    @property
    def depth(self) -> int:
        return len(self.splits)

    @property
    def key(self) -> tuple:
        return (self.leaf, self.splits, self.target)

    def validate(self, allowed: Sequence[Sequence[Split]] | dict | None = None,
                 n_classes: int | None = None) -> None:
        """Check the three path conditions: allowed splits, distinctness, valid target."""
        topo = Topology(self.depth)
        nodes = topo.path(self.leaf)
        if allowed is not None:
            for j, s in zip(nodes, self.splits):
                if s not in allowed[j]:
                    raise TreeError(f"split {s} not allowed at node {j}")
        if len(set(self.splits)) != len(self.splits):
            raise TreeError(f"repeated split on path to leaf {self.leaf}")
        if self.target < 0 or (n_classes is not None and self.target >= n_classes):
            raise TreeError(f"invalid target {self.target}")


@dataclass(frozen=True)
class DecisionTree:
    depth: int
    splits: tuple[Split, ...]   # one per internal node, heap order
    targets: tuple[int, ...]    # one per leaf, left to right

    def __post_init__(self):
        topo = self.topology
        if len(self.splits) != topo.n_internal or len(self.targets) != topo.n_leaves:
            raise TreeError("wrong number of splits or targets for depth")
        for leaf in topo.leaves:
            path = [self.splits[j] for j in topo.path(leaf)]
            if len(set(path)) != len(path):
                raise TreeError(f"repeated split on path to leaf {leaf}")

    @cached_property
    def topology(self) -> Topology:
        return Topology(self.depth)

    def target_of(self, leaf: int) -> int:
        return self.targets[self.topology.leaf_index(leaf)]

    def route_row(self, row: Sequence[float]) -> int:
        node = 0
        n_int = self.topology.n_internal
        while node < n_int:
            s = self.splits[node]
            node = 2 * node + 1 if row[s.feature] <= s.threshold else 2 * node + 2
        return node

    def route(self, values: np.ndarray) -> np.ndarray:
        """Leaf id for every row of ``values``."""
        feats = np.array([s.feature for s in self.splits], dtype=np.int64)
        thr = np.array([s.threshold for s in self.splits], dtype=float)
        node = np.zeros(len(values), dtype=np.int64)
        rows = np.arange(len(values))
        for _ in range(self.depth):
            go_left = values[rows, feats[node]] <= thr[node]
            node = np.where(go_left, 2 * node + 1, 2 * node + 2)
        return node

    def predict(self, values: np.ndarray) -> np.ndarray:
        leaves = self.route(np.asarray(values, dtype=float))
        return np.asarray(self.targets, dtype=np.int64)[leaves - self.topology.n_internal]

    # model file -------------------------------------------------------

    def to_json(self) -> str:
        n_int = self.topology.n_internal
        nodes = ",\n    ".join(
            f'{{"id": {j}, "feature": {s.feature}, "threshold": {_real(s.threshold)}}}'
            for j, s in enumerate(self.splits))
        leaves = ",\n    ".join(
            f'{{"id": {n_int + i}, "target": {t}}}' for i, t in enumerate(self.targets))
        return (f'{{\n  "depth": {self.depth},\n  "nodes": [\n    {nodes}\n  ],\n'
                f'  "leaves": [\n    {leaves}\n  ]\n}}\n')

    @classmethod
    def from_json(cls, text: str) -> "DecisionTree":
        obj = json.loads(text)
        nodes = sorted(obj["nodes"], key=lambda n: n["id"])
        leaves = sorted(obj["leaves"], key=lambda n: n["id"])
        return cls(int(obj["depth"]),
                   tuple(Split(int(n["feature"]), float(n["threshold"])) for n in nodes),
                   tuple(int(n["target"]) for n in leaves))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DecisionTree":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _real(x: float) -> str:
    return format(float(x), ".17g")


def _as_rowset(rows, width: int) -> RowSet:
    if rows is None:
        return RowSet.full(width)
    if isinstance(rows, RowSet):
        return rows
    return RowSet.from_indices(rows, width)


def route_row(t: DecisionTree, row: Sequence[float]) -> int:
    return t.route_row(row)


def rows_reaching_leaf(p: DecisionPath, d: Dataset, rows: RowSet | Sequence[int] | None = None) -> RowSet:
    """R^l(p): rows passing the test at every LC(l) node and failing it at every RC(l) node."""
    mask = _as_rowset(rows, d.n_rows).to_mask()
    topo = Topology(p.depth)
    for (node, left), s in zip(topo.path_directions(p.leaf), p.splits):
        mask &= s.mask(d.values) if left else ~s.mask(d.values)
    return RowSet.from_mask(mask)


def correct_predictions(p: DecisionPath, d: Dataset, rows=None) -> int:
    reach = rows_reaching_leaf(p, d, rows).to_mask()
    return int(np.count_nonzero(d.targets[reach] == p.target))


def tree_accuracy(t: DecisionTree, d: Dataset, rows=None) -> float:
    idx = np.arange(d.n_rows) if rows is None else _as_rowset(rows, d.n_rows).indices()
    if len(idx) == 0:
        raise TreeError("accuracy of an empty row set is undefined")
    pred = t.predict(d.values[idx])
    return float(np.count_nonzero(pred == d.targets[idx])) / len(idx)


def paths_of_tree(t: DecisionTree) -> list[DecisionPath]:
    topo = t.topology
    return [DecisionPath(l, tuple(t.splits[j] for j in topo.path(l)), t.target_of(l))
            for l in topo.leaves]


def tree_from_paths(paths: Iterable[DecisionPath]) -> DecisionTree:
    paths = list(paths)
    if not paths:
        raise TreeError("no paths given")
    depth = paths[0].depth
    topo = Topology(depth)
    by_leaf: dict[int, DecisionPath] = {}
    for p in paths:
        if p.depth != depth:
            raise TreeError("paths of different depths")
        if p.leaf in by_leaf:
            raise TreeError(f"two paths for leaf {p.leaf}")
        p.validate()
        by_leaf[p.leaf] = p
    if sorted(by_leaf) != list(topo.leaves):
        raise TreeError("need exactly one path per leaf")
    assigned: dict[int, Split] = {}
    for leaf in topo.leaves:
        p = by_leaf[leaf]
        for j, s in zip(topo.path(leaf), p.splits):
            prev = assigned.setdefault(j, s)
            if prev != s:
                raise TreeError(f"paths disagree at node {j}: {prev} vs {s}")
    return DecisionTree(depth, tuple(assigned[j] for j in topo.internal_nodes),
                        tuple(by_leaf[l].target for l in topo.leaves))
