from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgtree.cart import CartParams, CartTree, build
from cgtree.dataset import Dataset
from cgtree.sampling import (RestrictedSplits, SamplingParams, align_cart_to_topology, default_q,
                             run_threshold_sampling)
from cgtree.tree import Split, TreeError, paths_of_tree, tree_accuracy, tree_from_paths

from conftest import random_dataset


def test_default_q():
    assert default_q(4)[:2] == (10, 6) and len(default_q(4)) == 15
    assert default_q(2) == (50, 33, 33)
    assert default_q(1) == (150,)


def test_params_validation():
    with pytest.raises(ValueError):
        SamplingParams(alpha=0.0)
    with pytest.raises(ValueError):
        SamplingParams(tau=0)
    with pytest.raises(ValueError):
        SamplingParams(q=(1, 0, 1))


def test_deterministic_root_stalls_after_tau_rounds():
    # every subsample has the same best root split (duplicated values), so
    # only the first run introduces a root split and tau stalled runs follow
    X = np.array([[0.0]] * 20 + [[1.0]] * 20)
    d = Dataset(X, [0] * 20 + [1] * 20, 2)
    res = run_threshold_sampling(d, np.arange(40), 1, SamplingParams(tau=7, seed=3))
    assert res.iterations == 7 + 1
    assert res.splits[0] == (Split(0, 0.0),)


def test_full_cart_split_always_retained():
    rng = np.random.default_rng(0)
    d = random_dataset(rng, 80, 4, 3, levels=8)
    res = run_threshold_sampling(d, np.arange(80), 2, SamplingParams(tau=10, q=(1, 1, 1), seed=1))
    for j, s in res.full_cart.splits.items():
        assert s in res.splits[j]
    for j in range(3):
        assert 1 <= len(res.splits[j]) <= 2


def test_retained_splits_dominate_discarded():
    rng = np.random.default_rng(1)
    X = np.round(rng.random((200, 4)), 2)
    y = ((X[:, 0] > 0.5) + (X[:, 1] > 0.3)).astype(int)
    flip = rng.random(200) < 0.2
    y[flip] = rng.integers(3, size=flip.sum())
    d = Dataset(X, y, 3)
    q = (3, 2, 2)
    res = run_threshold_sampling(d, np.arange(200), 2, SamplingParams(tau=20, q=q, seed=2))
    for j in range(3):
        ranked = sorted(((s, c) for (jj, s), c in res.frequencies.items() if jj == j), key=lambda sc: (-sc[1], sc[0]))
        top = ranked[: q[j]]
        assert {s for s, _ in top} <= set(res.splits[j])
        dropped = [c for s, c in ranked[q[j]:] if s not in res.splits[j]]
        if dropped:
            assert min(c for _, c in top) >= max(dropped)


def test_align_full_depth_is_identity():
    X = np.array([[a, b] for a in range(4) for b in range(4)], float)
    d = Dataset(X, [(a >= 2) * 2 + (b >= 1) for a, b in X.astype(int)], 4)
    c = build(d, None, CartParams(max_depth=2))
    assert c.depth == 2 and len(c.splits) == 3
    restricted = RestrictedSplits.from_lists([[c.splits[j]] for j in range(3)])
    t = align_cart_to_topology(c, 2, restricted)
    assert t.splits == tuple(c.splits[j] for j in range(3))


def test_align_single_leaf_pads_everything():
    c = CartTree(2, {}, {0: 1})
    restricted = RestrictedSplits.from_lists([[Split(0, 1.0), Split(1, 1.0)], [Split(0, 1.0), Split(1, 2.0)],
                                              [Split(0, 1.0), Split(2, 0.0)]])
    t = align_cart_to_topology(c, 2, restricted)
    assert t.targets == (1, 1, 1, 1)
    assert t.splits == (Split(0, 1.0), Split(1, 2.0), Split(2, 0.0))


def test_align_fails_without_distinct_split():
    c = CartTree(2, {}, {0: 0})
    restricted = RestrictedSplits.from_lists([[Split(0, 1.0)], [Split(0, 1.0)], [Split(0, 1.0)]])
    with pytest.raises(TreeError):
        align_cart_to_topology(c, 2, restricted)


@pytest.mark.invariant
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.integers(1, 3))
def test_padding_preserves_accuracy_and_agreement(seed, k):
    rng = np.random.default_rng(seed)
    d = random_dataset(rng, 50, 3, 3, levels=4)
    res = run_threshold_sampling(d, np.arange(50), k, SamplingParams(tau=5, seed=seed))
    assert tree_accuracy(res.warm_tree, d) == pytest.approx(res.full_cart.accuracy(d))
    assert tree_from_paths(res.warm_paths) == res.warm_tree
    for p in res.warm_paths:
        p.validate(res.splits, d.n_classes)
    for j in range(2 ** k - 1):
        assert res.splits[j], "every node needs at least one split"
        for s in res.splits[j]:
            assert s.threshold in set(d.values[:, s.feature])


def test_retained_splits_were_seen():
    rng = np.random.default_rng(4)
    d = random_dataset(rng, 100, 4, 3, levels=9)
    res = run_threshold_sampling(d, np.arange(100), 2, SamplingParams(tau=15, seed=4))
    seen = {(j, s) for (j, s) in res.frequencies} | set(res.full_cart.splits.items())
    for j in range(3):
        for s in res.splits[j]:
            assert (j, s) in seen


@pytest.mark.invariant
def test_sampling_deterministic():
    rng = np.random.default_rng(5)
    d = random_dataset(rng, 90, 3, 3, levels=12)
    a = run_threshold_sampling(d, np.arange(90), 2, SamplingParams(tau=10, seed=9))
    b = run_threshold_sampling(d, np.arange(90), 2, SamplingParams(tau=10, seed=9))
    assert a.splits == b.splits and a.warm_paths == b.warm_paths and a.iterations == b.iterations


def test_dump_format():
    rng = np.random.default_rng(6)
    d = random_dataset(rng, 40, 2, 2)
    res = run_threshold_sampling(d, np.arange(40), 1, SamplingParams(tau=3, seed=0))
    for line in res.dump().strip().splitlines():
        node, feat, thr, freq = line.split()
        assert node == "0" and int(freq) >= 0
        assert float(thr) in set(d.values[:, int(feat)])
