"""Reference implementations used as test oracles.

Everything here is written with plain loops over rows and exhaustive
enumeration, sharing no code with the package beyond plain data.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def route(row, splits_by_node, depth):
    """Leaf id reached by ``row``; ``splits_by_node[j] = (feature, threshold)``."""
    node = 0
    for _ in range(depth):
        f, thr = splits_by_node[node]
        node = 2 * node + 1 if row[f] <= thr else 2 * node + 2
    return node


def path_nodes(leaf):
    """[(node, went_left)] from the root down to ``leaf``."""
    out = []
    child = leaf
    while child > 0:
        parent = (child - 1) // 2
        out.append((parent, child == 2 * parent + 1))
        child = parent
    return out[::-1]


def reaches(row, leaf, path_splits):
    for (node, left), (f, thr) in zip(path_nodes(leaf), path_splits):
        if (row[f] <= thr) != left:
            return False
    return True


def best_tree_count(values, targets, n_classes, allowed, depth):
    """Most training rows any depth-``depth`` tree over ``allowed`` can classify correctly.

    ``allowed[j]`` lists (feature, threshold) pairs for internal node ``j``.
    Splits must be pairwise distinct along every root-to-leaf path and each
    leaf predicts its majority class.
    """
    n_int = 2 ** depth - 1
    best = -1
    for choice in itertools.product(*[allowed[j] for j in range(n_int)]):
        ok = True
        for leaf in range(n_int, 2 * n_int + 1):
            on_path = [choice[j] for j, _ in path_nodes(leaf)]
            if len(set(on_path)) != len(on_path):
                ok = False
                break
        if not ok:
            continue
        counts = {}
        for row, t in zip(values, targets):
            leaf = route(row, choice, depth)
            counts.setdefault(leaf, [0] * n_classes)[t] += 1
        best = max(best, sum(max(c) for c in counts.values()))
    return best


def bfs_lp_max(A, b, c):
    """max c.x s.t. A x = b, x >= 0 by enumerating every basis. None if infeasible."""
    A = np.asarray(A, float)
    m, n = A.shape
    best = None
    for cols in itertools.combinations(range(n), m):
        B = A[:, cols]
        if abs(np.linalg.det(B)) < 1e-9:
            continue
        xb = np.linalg.solve(B, b)
        if (xb < -1e-9).any():
            continue
        val = float(np.dot(np.asarray(c)[list(cols)], xb))
        if best is None or val > best:
            best = val
    return best


def brute_binary_max(A, b, c):
    """max c.x over x in {0,1}^n with A x = b. None if no assignment is feasible."""
    A = np.asarray(A, float)
    n = A.shape[1]
    best = None
    for bits in itertools.product((0.0, 1.0), repeat=n):
        x = np.array(bits)
        if np.abs(A @ x - b).max(initial=0.0) <= 1e-9:
            v = float(np.dot(c, x))
            if best is None or v > best:
                best = v
    return best


def best_path_rc(values, targets, leaf, target, allowed, depth, alpha, beta, gamma):
    """Largest reduced cost of a path to ``leaf`` with ``target``, by row-by-row routing.

    ``gamma[(leaf, node, (feature, threshold))]`` and ``alpha`` is the leaf's dual.
    """
    nodes = [j for j, _ in path_nodes(leaf)]
    best = -math.inf
    for combo in itertools.product(*[allowed[j] for j in nodes]):
        if len(set(combo)) != len(combo):
            continue
        val = -alpha - sum(gamma[(leaf, j, s)] for j, s in zip(nodes, combo))
        for r, (row, t) in enumerate(zip(values, targets)):
            if reaches(row, leaf, combo):
                val += (1.0 if t == target else 0.0) - beta[r]
        best = max(best, val)
    return best


def gini(counts):
    n = sum(counts)
    return 1.0 - sum((c / n) ** 2 for c in counts)


def exhaustive_best_split(values, targets, n_classes):
    """Lowest weighted gini over every (feature, observed value) with both sides nonempty.

    Returns (score, feature, threshold) with ties to lowest feature then threshold.
    """
    n = len(values)
    best = None
    for f in range(len(values[0])):
        for thr in sorted(set(row[f] for row in values)):
            left = [0] * n_classes
            right = [0] * n_classes
            for row, t in zip(values, targets):
                if row[f] <= thr:
                    left[t] += 1
                else:
                    right[t] += 1
            nl, nr = sum(left), sum(right)
            if nl == 0 or nr == 0:
                continue
            score = (nl * gini(left) + nr * gini(right)) / n
            if best is None or score < best[0] - 1e-12:
                best = (score, f, thr)
    return best


def random_bounded_lp(rng, m=6, n=10):
    """(A, b, c) for a feasible equality LP whose first row keeps the region bounded."""
    A = rng.integers(-3, 4, size=(m, n)).astype(float)
    A[0] = rng.integers(1, 4, size=n)
    x0 = rng.random(n) * (rng.random(n) < 0.6)
    b = A @ x0
    c = rng.integers(-5, 6, size=n).astype(float)
    return A, b, c
