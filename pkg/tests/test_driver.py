import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgtree.cart import CartParams, build
from cgtree.dataset import Dataset
from cgtree.driver import CghConfig, evaluate, run_cgh
from cgtree.pricing import PricingContext, exact_enumerate
from cgtree.sampling import SamplingParams
from cgtree.tree import tree_accuracy

import oracles
from conftest import random_dataset, tiny_instance

FAST = SamplingParams(tau=10)


def certify(res):
    """Largest reduced cost over every (leaf, target) under the final duals."""
    m = res.master
    ctx = PricingContext(m, m.unpack_duals(m.last.duals))
    best = -np.inf
    for leaf in m.topology.leaves:
        for t in range(m.d.n_classes):
            pp = exact_enumerate(ctx, leaf, t)
            if pp is not None:
                best = max(best, pp.reduced_cost)
    return best


def test_pure_dataset():
    d = Dataset(np.arange(20.0).reshape(10, 2), np.zeros(10, dtype=int), 2)
    res = run_cgh(d, None, CghConfig(depth=2, sampling=FAST))
    assert res.termination == "lp_optimal"
    assert res.iterations == 1
    assert res.train_accuracy == 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        CghConfig(depth=0)
    with pytest.raises(ValueError):
        CghConfig(time_limit=0)
    with pytest.raises(ValueError):
        CghConfig(exact_pricing="simplex")
    assert CghConfig().is_big(10_001) and not CghConfig().is_big(10_000)
    assert CghConfig(big_data=True).is_big(5)


def test_too_few_rows():
    d = Dataset(np.zeros((3, 1)), [0, 1, 0], 2)
    with pytest.raises(ValueError):
        run_cgh(d, None, CghConfig(depth=2))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_tiny_instances_reach_brute_force(seed):
    rng = np.random.default_rng(seed)
    d, rs = tiny_instance(rng, n_rows=int(rng.integers(8, 31)), n_features=int(rng.integers(1, 5)),
                          n_classes=int(rng.integers(2, 4)), max_splits=4)
    res = run_cgh(d, None, CghConfig(depth=2, seed=seed), restricted=rs)
    ref = oracles.best_tree_count(d.values.tolist(), d.targets.tolist(), d.n_classes,
                                  [[tuple(s) for s in l] for l in rs.by_node], 2)
    assert res.termination == "lp_optimal"
    assert res.ilp_objective == ref
    assert certify(res) <= 1e-6


@pytest.mark.invariant
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.integers(1, 3))
def test_result_invariants(seed, k):
    rng = np.random.default_rng(seed)
    d = random_dataset(rng, 60, 3, 3, levels=6)
    res = run_cgh(d, None, CghConfig(depth=k, sampling=SamplingParams(tau=8, seed=seed), seed=seed))
    hist = res.lp_history
    assert all(b >= a - 1e-6 for a, b in zip(hist, hist[1:]))
    assert res.ilp_objective <= res.lp_bound + 1e-6
    assert res.train_accuracy * d.n_rows == pytest.approx(res.ilp_objective)
    cart = build(d, None, CartParams(max_depth=k)).accuracy(d)
    assert res.train_accuracy >= cart
    assert res.cart_train_accuracy == cart
    if res.termination == "lp_optimal":
        assert certify(res) <= 1e-6


@pytest.mark.invariant
def test_fixed_seed_replays_exactly():
    rng = np.random.default_rng(11)
    d = random_dataset(rng, 80, 4, 3, levels=8)
    cfg = CghConfig(depth=2, sampling=SamplingParams(tau=10, seed=3), seed=3)
    a, b = run_cgh(d, None, cfg), run_cgh(d, None, cfg)
    assert a.tree == b.tree
    assert a.lp_history == b.lp_history
    assert (a.iterations, a.columns_generated, a.lp_bound) == (b.iterations, b.columns_generated, b.lp_bound)
    assert [c.key for c in a.master.columns] == [c.key for c in b.master.columns]


def test_milp_pricing_mode_agrees_with_enumeration():
    rng = np.random.default_rng(12)
    d, rs = tiny_instance(rng, n_rows=16, n_classes=2, max_splits=3)
    a = run_cgh(d, None, CghConfig(depth=2), restricted=rs)
    b = run_cgh(d, None, CghConfig(depth=2, exact_pricing="milp"), restricted=rs)
    assert a.ilp_objective == b.ilp_objective
    assert a.lp_bound == pytest.approx(b.lp_bound, abs=1e-6)


def test_big_data_mode_skips_exact_pricing():
    rng = np.random.default_rng(13)
    d = random_dataset(rng, 60, 3, 3, levels=6)
    fh = io.StringIO()
    res = run_cgh(d, None, CghConfig(depth=2, sampling=FAST, big_data=True), trace=fh)
    assert res.termination == "heuristic_exhausted"
    assert fh.getvalue() == ""
    assert res.train_accuracy >= res.cart_train_accuracy


def test_iteration_cap_reports_time_limit():
    rng = np.random.default_rng(14)
    d = random_dataset(rng, 60, 3, 3, levels=6)
    res = run_cgh(d, None, CghConfig(depth=2, sampling=FAST, max_iterations=1))
    assert res.termination == "time_limit" and res.iterations == 1
    assert res.train_accuracy >= res.cart_train_accuracy


def test_heuristic_disabled_still_optimal():
    rng = np.random.default_rng(15)
    d, rs = tiny_instance(rng, n_rows=20, n_classes=3)
    a = run_cgh(d, None, CghConfig(depth=2, use_heuristic=False), restricted=rs)
    b = run_cgh(d, None, CghConfig(depth=2), restricted=rs)
    assert a.ilp_objective == b.ilp_objective


def test_evaluate():
    rng = np.random.default_rng(16)
    d = random_dataset(rng, 40, 2, 2)
    train = np.arange(20)
    res = run_cgh(d, train, CghConfig(depth=1, sampling=FAST))
    assert evaluate(res, d, train) == pytest.approx(res.train_accuracy)
    with pytest.raises(ValueError):
        evaluate(res, d, [])


def test_constant_tree_test_accuracy_is_majority_share():
    X = np.zeros((40, 1))
    y = np.array([0] * 30 + [1] * 10)
    d = Dataset(X, y, 2)
    res = run_cgh(d, np.arange(0, 40, 2), CghConfig(depth=1, sampling=FAST))
    test = np.arange(1, 40, 2)
    assert set(res.tree.targets) == {0}
    assert evaluate(res, d, test) == pytest.approx(np.mean(y[test] == 0))


def test_run_log_lines():
    rng = np.random.default_rng(17)
    d = random_dataset(rng, 60, 3, 3, levels=6)
    res = run_cgh(d, None, CghConfig(depth=2, sampling=FAST))
    text = res.log_text()
    assert "sampling:" in text and "done:" in text
    iters = [l for l in res.run_log if " iter " in l]
    assert len(iters) == res.iterations
    for line in iters:
        secs, _, n, _, lp, mode = line.split()[:6]
        assert secs.endswith("s") and mode in ("heuristic", "exact", "bound")
