import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from cgtree.milp import MilpSpec, solve_milp
from cgtree.solver import LinearProgram, solve_lp

import oracles


def set_partition(rng, m, n):
    """Binary set-partitioning program with at least one feasible partition."""
    cols = []
    labels = rng.integers(0, rng.integers(1, m + 1), size=m)
    for g in np.unique(labels):
        cols.append((labels == g).astype(float))
    while len(cols) < n:
        cols.append((rng.random(m) < 0.4).astype(float))
    A = np.column_stack(cols[:n])
    perm = rng.permutation(n)
    A = A[:, perm]
    c = rng.integers(1, 10, size=n).astype(float)
    return A, np.ones(m), c


def program(A, b, c, binary=True):
    n = A.shape[1]
    return LinearProgram(c, sp.csc_matrix(A), b, ub=np.ones(n) if binary else None)


def test_integral_relaxation_needs_no_branching():
    p = program(np.array([[1.0, 0.0], [0.0, 1.0]]), np.ones(2), np.array([1.0, 2.0]))
    res = solve_milp(MilpSpec(p, [0, 1]))
    assert res.status == "optimal" and res.nodes == 1
    assert res.objective == pytest.approx(3.0)


def test_parity_infeasible():
    p = program(np.array([[2.0]]), np.array([1.0]), np.array([1.0]))
    res = solve_milp(MilpSpec(p, [0]))
    assert res.status == "infeasible" and res.x is None


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(2, 6), n=st.integers(3, 12))
def test_set_partition_matches_brute_force(seed, m, n):
    rng = np.random.default_rng(seed)
    A, b, c = set_partition(rng, m, n)
    p = program(A, b, c)
    res = solve_milp(MilpSpec(p, np.arange(A.shape[1])))
    ref = oracles.brute_binary_max(A, b, c)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(ref)
    assert res.bound >= ref - 1e-9
    assert res.objective <= solve_lp(p).objective + 1e-9
    assert np.abs(A @ res.x - b).max() <= 1e-9


def test_node_limit_returns_incumbent_with_limit_status():
    # odd cycle: LP optimum is all halves, every integer point is worse
    A = np.array([[1, 1, 0], [0, 1, 1], [1, 0, 1]], float)
    A = np.hstack([A, np.eye(3)])
    c = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    p = program(A, np.ones(3), c)
    inc = np.array([1.0, 0, 0, 0, 1.0, 0])
    res = solve_milp(MilpSpec(p, np.arange(6), incumbent=inc, node_limit=1))
    assert res.status == "limit" and not res.proven
    assert res.objective == pytest.approx(1.0)
    assert res.bound >= 1.5 - 1e-9
    full = solve_milp(MilpSpec(p, np.arange(6)))
    assert full.status == "optimal" and full.objective == pytest.approx(1.0)


def test_integer_objective_pruning_keeps_optimum():
    rng = np.random.default_rng(7)
    A, b, c = set_partition(rng, 5, 10)
    p = program(A, b, c)
    plain = solve_milp(MilpSpec(p, np.arange(10)))
    rounded = solve_milp(MilpSpec(p, np.arange(10), objective_integral=True))
    assert plain.objective == rounded.objective


def test_spec_rejects_bad_index():
    p = program(np.ones((1, 2)), np.ones(1), np.ones(2))
    with pytest.raises(ValueError):
        MilpSpec(p, [2])
