from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from cgtree.dataset import Dataset

DATA = Path(__file__).resolve().parents[1] / "data"


def pytest_configure(config):
    config.addinivalue_line("markers", "invariant: property suites that can be run on their own (-m invariant)")
    config.addinivalue_line("markers", "slow: runs full benchmark cells")


@pytest.fixture
def data_dir() -> Path:
    return DATA


def random_dataset(rng: np.random.Generator, n_rows: int, n_features: int, n_classes: int, levels: int = 5) -> Dataset:
    """Small integer-valued data so thresholds repeat and ties occur."""
    values = rng.integers(0, levels, size=(n_rows, n_features)).astype(float)
    targets = rng.integers(0, n_classes, size=n_rows)
    targets[:n_classes] = np.arange(n_classes)
    return Dataset(values, targets, n_classes)


def all_paths(restricted, n_classes):
    """Every valid decision path over ``restricted`` (all leaves, tuples and targets)."""
    import itertools

    from cgtree.tree import DecisionPath, Topology

    topo = Topology(restricted.depth)
    out = []
    for leaf in topo.leaves:
        for combo in itertools.product(*[restricted[j] for j in topo.path(leaf)]):
            if len(set(combo)) == len(combo):
                out.extend(DecisionPath(leaf, combo, t) for t in range(n_classes))
    return out


def tiny_instance(rng, n_rows=12, n_features=3, n_classes=2, max_splits=3, depth=2, levels=4):
    """Random data plus restricted split sets that always admit a tree."""
    from cgtree.sampling import RestrictedSplits
    from cgtree.tree import Split

    d = random_dataset(rng, n_rows, n_features, n_classes, levels)
    universe = sorted({Split(int(f), float(v)) for f in range(n_features) for v in np.unique(d.values[:, f])})
    lists = []
    for j in range(2 ** depth - 1):
        k = int(rng.integers(1, max_splits + 1))
        lists.append([universe[i] for i in rng.choice(len(universe), size=min(k, len(universe)), replace=False)])
    # deeper nodes need a split distinct from each ancestor choice
    for j in range(1, 2 ** depth - 1):
        if len(lists[j]) < 2:
            extra = next(s for s in universe if s not in lists[j])
            lists[j].append(extra)
    return d, RestrictedSplits.from_lists(lists)
