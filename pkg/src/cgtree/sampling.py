"""Threshold sampling: harvest per-node split sets and a warm start from repeated CART runs."""

from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .cart import CartParams, CartTree, build
from .dataset import Dataset
from .tree import DecisionPath, DecisionTree, Split, Topology, TreeError, paths_of_tree


@dataclass(frozen=True)
class SamplingParams:
    alpha: float = 0.9
    tau: int = 300
    q: tuple[int, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if self.q is not None and min(self.q) < 1:
            raise ValueError("every q_j must be >= 1")


def default_q(k: int) -> tuple[int, ...]:
    """Retention counts: floor(150/|N_int|) at the root, floor(100/|N_int|) elsewhere."""
    if k < 1:
        raise ValueError("depth must be >= 1")
    n_int = 2 ** k - 1
    return (150 // n_int,) + (100 // n_int,) * (n_int - 1)


@dataclass(frozen=True)
class RestrictedSplits:
    """Allowed splits per internal node, each list sorted by (feature, threshold)."""

    by_node: tuple[tuple[Split, ...], ...]

    @classmethod
    def from_lists(cls, lists: Iterable[Iterable[Split]]) -> "RestrictedSplits":
        return cls(tuple(tuple(sorted(set(Split(int(s[0]), float(s[1])) for s in l))) for l in lists))

    def __getitem__(self, j: int) -> tuple[Split, ...]:
        return self.by_node[j]

    def __len__(self) -> int:
        return len(self.by_node)

    @property
    def depth(self) -> int:
        return (len(self.by_node) + 1).bit_length() - 1

    def all_splits(self) -> list[Split]:
        return sorted({s for node in self.by_node for s in node})


@dataclass
class SamplingResult:
    splits: RestrictedSplits
    warm_paths: list[DecisionPath]
    warm_tree: DecisionTree
    full_cart: CartTree
    frequencies: Counter = field(default_factory=Counter)
    iterations: int = 0

    def __iter__(self):
        # allows ``splits, paths = run_threshold_sampling(...)``
        return iter((self.splits, self.warm_paths))

    def dump(self) -> str:
        """One line per (node, feature, threshold, frequency)."""
        lines = []
        for j, node_splits in enumerate(self.splits.by_node):
            for s in node_splits:
                lines.append(f"{j} {s.feature} {s.threshold!r} {self.frequencies.get((j, s), 0)}")
        return "\n".join(lines) + "\n"


def _fallback_splits(d: Dataset, rows: np.ndarray, seen: Counter) -> list[Split]:
    """Replacement splits for nodes no CART tree reached, most useful first."""
    totals: Counter = Counter()
    for (_, s), c in seen.items():
        totals[s] += c
    out = [s for s, _ in sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))]
    extra = []
    for f in range(d.n_features):
        uniq = np.unique(d.values[rows, f])
        order = np.argsort(np.abs(np.arange(len(uniq)) - (len(uniq) - 1) // 2), kind="stable")
        extra.extend((rank, Split(f, float(uniq[i]))) for rank, i in enumerate(order))
    extra.sort(key=lambda t: (t[0], t[1]))
    return out + [s for _, s in extra if s not in totals]


def align_cart_to_topology(c: CartTree, k: int, restricted: RestrictedSplits | Sequence[Sequence[Split]]) -> DecisionTree:
    """Embed a possibly shallow CART tree in the full depth-k topology.

    Nodes CART did not grow get the first allowed split that differs from
    their ancestors' splits; every descendant leaf inherits the majority
    target of the nearest grown node, so predictions are unchanged.
    """
    topo = Topology(k)
    if c.depth > k:
        raise TreeError(f"CART tree of depth {c.depth} does not fit depth {k}")
    splits: list[Split | None] = [None] * topo.n_internal
    grown = [False] * (2 * topo.n_internal + 1)
    target = [0] * (2 * topo.n_internal + 1)
    for j in range(2 * topo.n_internal + 1):
        parent = (j - 1) // 2
        parent_grown = j == 0 or (grown[parent] and parent in c.splits)
        grown[j] = parent_grown and j in c.targets
        target[j] = c.targets[j] if grown[j] else target[parent]
        if topo.is_leaf(j):
            continue
        if grown[j] and j in c.splits:
            splits[j] = c.splits[j]
            continue
        ancestors = set()
        a = j
        while a > 0:
            a = (a - 1) // 2
            ancestors.add(splits[a])
        for s in restricted[j]:
            if s not in ancestors:
                splits[j] = s
                break
        else:
            raise TreeError(f"no split distinct from its ancestors available at node {j}")
    return DecisionTree(k, tuple(splits), tuple(target[l] for l in topo.leaves))


def run_threshold_sampling(d: Dataset, train_rows, k: int, params: SamplingParams = SamplingParams(),
                           cart_params: CartParams | None = None, deadline: float | None = None) -> SamplingResult:
    """Repeated CART on alpha-subsamples until the root split stalls for tau rounds.

    Keeps the ``q_j`` most frequent splits per node plus the full-data CART
    split, and returns the full-data CART tree (padded to depth k) as warm
    start paths.
    """
    rows = np.asarray(train_rows if not hasattr(train_rows, "indices") else train_rows.indices(), dtype=np.int64)
    if len(rows) == 0:
        raise ValueError("no training rows")
    topo = Topology(k)
    q = params.q if params.q is not None else default_q(k)
    if len(q) != topo.n_internal:
        raise ValueError(f"need {topo.n_internal} retention counts, got {len(q)}")
    cp = cart_params if cart_params is not None else CartParams(max_depth=k)
    rng = np.random.default_rng(params.seed)
    size = math.ceil(params.alpha * len(rows))
    freq: Counter = Counter()
    root_seen: set[Split] = set()
    stall = iterations = 0
    while stall < params.tau:
        if deadline is not None and time.monotonic() > deadline:
            break
        sample = rng.choice(rows, size=size, replace=False)
        tree = build(d, sample, cp)
        iterations += 1
        for j, s in tree.splits.items():
            freq[(j, s)] += 1
        root = tree.splits.get(0)
        # a single-leaf tree brings no new root split
        if root is None or root in root_seen:
            stall += 1
        else:
            root_seen.add(root)
            stall = 0
    full = build(d, rows, cp)

    per_node: list[list[Split]] = []
    for j in topo.internal_nodes:
        ranked = sorted(((s, c) for (jj, s), c in freq.items() if jj == j), key=lambda sc: (-sc[1], sc[0]))
        keep = [s for s, _ in ranked[: q[j]]]
        if j in full.splits and full.splits[j] not in keep:
            keep.append(full.splits[j])
        per_node.append(keep)

    fallback = None
    for j in topo.internal_nodes:
        need = 1 if j in full.splits else topo.level(j) + 1
        if len(per_node[j]) < need:
            if fallback is None:
                fallback = _fallback_splits(d, rows, freq)
            for s in fallback:
                if len(per_node[j]) >= need:
                    break
                if s not in per_node[j]:
                    per_node[j].append(s)
    restricted = RestrictedSplits.from_lists(per_node)
    warm = align_cart_to_topology(full, k, restricted)
    return SamplingResult(restricted, paths_of_tree(warm), warm, full, freq, iterations)
