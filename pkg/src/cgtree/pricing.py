"""Column pricing: reduced costs, the randomised heuristic, exact enumeration and the pricing MILP.

For a leaf ``l`` and a split tuple ``(s_1, ..., s_k)`` along its path the
reduced cost of the path with target ``t`` is::

    |{r reached : t_r = t}| - alpha_l - sum_h gamma[l, j_h, s_h] - sum_{r reached} beta_r

so each ``(leaf, target)`` pair is an independent subproblem.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Iterator, TextIO

import numpy as np
import scipy.sparse as sp

from .master import Column, DualValues, MasterModel
from .milp import MilpSpec, solve_milp
from .solver import DEFAULT_TOL, LinearProgram, Tolerances
from .tree import DecisionPath, Split, Topology

log = logging.getLogger(__name__)

POSITIVE = 1e-6           # reduced cost needed to count as an improving column
ENUM_BLOCK = 1 << 22      # cells per enumeration block (paths x rows)
MODES = ("heuristic", "exact_enum", "milp")


class PricingError(RuntimeError):
    pass


@dataclass(frozen=True)
class PricedPath:
    column: Column
    reduced_cost: float

    @property
    def path(self) -> DecisionPath:
        return self.column.path


@dataclass
class _Level:
    node: int
    left: bool
    splits: tuple[Split, ...]
    ids: np.ndarray        # global split ids (for distinctness)
    outcome: np.ndarray    # (|S_j|, R) bool: row goes the path's way at this node
    gamma: np.ndarray      # (|S_j|,) gamma[l, node, split]


class PricingContext:
    """Immutable view of the master and one dual snapshot, shaped for pricing."""

    def __init__(self, master: MasterModel, duals: DualValues):
        self.master = master
        self.duals = duals
        self.topology = topo = master.topology
        d = master.d
        self.n_rows, self.n_classes = d.n_rows, d.n_classes
        self.targets = d.targets
        self.onehot = np.zeros((d.n_rows, d.n_classes))
        self.onehot[np.arange(d.n_rows), d.targets] = 1.0
        # R x (T + 1): class indicators and beta, one matmul scores every path
        self.weights = np.column_stack([self.onehot, duals.beta])
        masks = master.masks
        self.levels: list[list[_Level]] = []
        for leaf in topo.leaves:
            levels = []
            for j, left in topo.path_directions(leaf):
                splits = master.restricted[j]
                ids = np.array([masks.index[s] for s in splits], dtype=np.int64)
                m = masks.matrix[ids]
                try:
                    gam = np.array([duals.gamma[(leaf, j, s)] for s in splits])
                except KeyError as exc:
                    raise PricingError(f"missing gamma dual for {exc.args[0]}") from None
                levels.append(_Level(j, left, splits, ids, m if left else ~m, gam))
            self.levels.append(levels)

    @property
    def n_leaves(self) -> int:
        return self.topology.n_leaves

    def leaf_id(self, li: int) -> int:
        return self.topology.leaves[li]

    def column(self, li: int, choice: tuple[int, ...], target: int) -> Column:
        levels = self.levels[li]
        path = DecisionPath(self.leaf_id(li), tuple(lv.splits[c] for lv, c in zip(levels, choice)), int(target))
        return self.master.make_column(path)

    def priced(self, li: int, choice: tuple[int, ...], target: int) -> PricedPath:
        col = self.column(li, choice, target)
        return PricedPath(col, reduced_cost_of(col, self.duals, self.master))

    def reach(self, li: int, choice: tuple[int, ...]) -> np.ndarray:
        mask = np.ones(self.n_rows, dtype=bool)
        for lv, c in zip(self.levels[li], choice):
            mask &= lv.outcome[c]
        return mask

    def score_masks(self, li: int, reach: np.ndarray, gamma_sum: np.ndarray) -> np.ndarray:
        """(P, T) reduced costs for P reach masks at leaf ``li``."""
        w = reach.astype(np.float64) @ self.weights
        return w[:, :-1] - (w[:, -1] + gamma_sum + self.duals.alpha[li])[:, None]


def reduced_cost_of(path: Column | DecisionPath, duals: DualValues, master: MasterModel | None = None) -> float:
    """Reduced cost of a column; a bare path needs ``master`` to compute its row set."""
    if isinstance(path, DecisionPath):
        if master is None:
            raise PricingError("a bare decision path needs the master to evaluate")
        col = master.make_column(path)
    else:
        col = path
    p = col.path
    topo = Topology(p.depth)
    li = topo.leaf_index(p.leaf)
    nodes = topo.path(p.leaf)
    gam = 0.0
    for j, s in zip(nodes, p.splits):
        try:
            gam += duals.gamma[(p.leaf, j, s)]
        except KeyError:
            raise PricingError(f"no gamma dual for leaf {p.leaf}, node {j}, split {s}") from None
    beta = float(duals.beta[col.rows.indices()].sum()) if len(col.rows) else 0.0
    return float(col.cp - duals.alpha[li] - gam - beta)


# -- exact enumeration -----------------------------------------------------

def _enumerate_leaf(ctx: PricingContext, li: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield blocks ``(choices (P, k), scores (P, T))`` over all distinct split tuples.

    Tuples come out in lexicographic order of their per-level indices.
    """
    levels = ctx.levels[li]
    R = ctx.n_rows
    pre_reach = np.ones((1, R), dtype=bool)
    pre_choice = np.zeros((1, 0), dtype=np.int64)
    pre_ids = np.zeros((1, 0), dtype=np.int64)
    pre_gam = np.zeros(1)
    for lv in levels[:-1]:
        n = len(lv.splits)
        reach = (pre_reach[:, None, :] & lv.outcome[None, :, :]).reshape(-1, R)
        choice = np.column_stack([np.repeat(pre_choice, n, axis=0), np.tile(np.arange(n), len(pre_choice))])
        ids = np.column_stack([np.repeat(pre_ids, n, axis=0), np.tile(lv.ids, len(pre_ids))])
        gam = (pre_gam[:, None] + lv.gamma[None, :]).ravel()
        ok = ~(ids[:, :-1] == ids[:, -1:]).any(axis=1)
        pre_reach, pre_choice, pre_ids, pre_gam = reach[ok], choice[ok], ids[ok], gam[ok]
    last = levels[-1]
    n = len(last.splits)
    block = max(1, ENUM_BLOCK // max(1, n * R))
    for start in range(0, len(pre_reach), block):
        sl = slice(start, start + block)
        b = len(pre_reach[sl])
        reach = (pre_reach[sl][:, None, :] & last.outcome[None, :, :]).reshape(-1, R)
        choice = np.column_stack([np.repeat(pre_choice[sl], n, axis=0), np.tile(np.arange(n), b)])
        ids_prev = np.repeat(pre_ids[sl], n, axis=0)
        ids_last = np.tile(last.ids, b)
        gam = (pre_gam[sl][:, None] + last.gamma[None, :]).ravel()
        ok = ~(ids_prev == ids_last[:, None]).any(axis=1)
        if not ok.any():
            continue
        yield choice[ok], ctx.score_masks(li, reach[ok], gam[ok])


def _best_per_target(ctx: PricingContext, li: int) -> tuple[np.ndarray, list]:
    """Best reduced cost and its split tuple for every target at leaf ``li``."""
    best = np.full(ctx.n_classes, -np.inf)
    arg: list = [None] * ctx.n_classes
    for choice, scores in _enumerate_leaf(ctx, li):
        top = scores.argmax(axis=0)
        for t in range(ctx.n_classes):
            v = scores[top[t], t]
            if v > best[t]:
                best[t], arg[t] = v, tuple(int(c) for c in choice[top[t]])
    return best, arg


def exact_enumerate(ctx: PricingContext, leaf: int, target: int) -> PricedPath | None:
    """Maximum reduced cost path for ``(leaf, target)`` by full enumeration.

    ``leaf`` is a node id. Returns ``None`` when no split tuple on the path is
    pairwise distinct. Ties go to the lexicographically smallest tuple.
    """
    li = ctx.topology.leaf_index(leaf)
    best, arg = -np.inf, None
    for choice, scores in _enumerate_leaf(ctx, li):
        i = int(scores[:, target].argmax())
        if scores[i, target] > best:
            best, arg = scores[i, target], tuple(int(c) for c in choice[i])
    return None if arg is None else ctx.priced(li, arg, target)


def columns_above(ctx: PricingContext, threshold: float, limit: int) -> list[Column] | None:
    """Every column with reduced cost >= ``threshold``; ``None`` if more than ``limit``."""
    out: list[Column] = []
    for li in range(ctx.n_leaves):
        for choice, scores in _enumerate_leaf(ctx, li):
            ps, ts = np.nonzero(scores >= threshold)
            if len(out) + len(ps) > limit:
                return None
            out.extend(ctx.column(li, tuple(int(c) for c in choice[p]), int(t)) for p, t in zip(ps, ts))
    return out


# -- pricing MILP ----------------------------------------------------------

@dataclass
class MilpPricing:
    priced: PricedPath | None
    objective: float
    proven: bool


def build_pricing_program(ctx: PricingContext, li: int, target: int) -> tuple[LinearProgram, np.ndarray, list[slice]]:
    """Equality-form pricing program for one ``(leaf, target)`` pair.

    Variables: one binary ``u`` per (level, split), ``y_r >= 0`` per row
    (1 when row r reaches the leaf), then one slack per inequality. Rows:
    one split per level; ``y_r`` at most the routing indicator of every
    level; ``y_r`` at least (sum of routing indicators) - (k - 1); each
    split used at most once along the path.
    """
    levels = ctx.levels[li]
    k, R = len(levels), ctx.n_rows
    sizes = [len(lv.splits) for lv in levels]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    n_u = int(offsets[-1])
    u_slices = [slice(int(offsets[h]), int(offsets[h + 1])) for h in range(k)]
    y0 = n_u
    rows, cols, vals, rhs = [], [], [], []
    n_slack = 0

    def slack_var() -> int:
        nonlocal n_slack
        n_slack += 1
        return -n_slack   # resolved after the structural count is known

    row = 0
    for h in range(k):
        for a in range(sizes[h]):
            rows.append(row); cols.append(offsets[h] + a); vals.append(1.0)
        rhs.append(1.0)
        row += 1
    # y_r - sum_{a: routed} u_{h,a} + s = 0
    for h, lv in enumerate(levels):
        a_idx, r_idx = np.nonzero(lv.outcome)
        base = row
        rows.extend(base + r_idx); cols.extend(offsets[h] + a_idx); vals.extend([-1.0] * len(a_idx))
        rows.extend(base + np.arange(R)); cols.extend(y0 + np.arange(R)); vals.extend([1.0] * R)
        for r in range(R):
            rows.append(base + r); cols.append(slack_var()); vals.append(1.0)
        rhs.extend([0.0] * R)
        row += R
    # sum_h sum_{a: routed} u_{h,a} - y_r + s = k - 1
    base = row
    for h, lv in enumerate(levels):
        a_idx, r_idx = np.nonzero(lv.outcome)
        rows.extend(base + r_idx); cols.extend(offsets[h] + a_idx); vals.extend([1.0] * len(a_idx))
    rows.extend(base + np.arange(R)); cols.extend(y0 + np.arange(R)); vals.extend([-1.0] * R)
    for r in range(R):
        rows.append(base + r); cols.append(slack_var()); vals.append(1.0)
    rhs.extend([float(k - 1)] * R)
    row += R
    # sum over levels holding split a of u_{h,a} + s <= 1, only where shared
    members: dict[int, list[int]] = {}
    for h, lv in enumerate(levels):
        for a, sid in enumerate(lv.ids):
            members.setdefault(int(sid), []).append(int(offsets[h] + a))
    for sid in sorted(members):
        vs = members[sid]
        if len(vs) < 2:
            continue
        for v in vs:
            rows.append(row); cols.append(v); vals.append(1.0)
        rows.append(row); cols.append(slack_var()); vals.append(1.0)
        rhs.append(1.0)
        row += 1
    n_struct = n_u + R
    cols = np.asarray(cols, dtype=np.int64)
    cols = np.where(cols < 0, n_struct - cols - 1, cols)
    n = n_struct + n_slack
    A = sp.csc_matrix((np.asarray(vals), (np.asarray(rows, dtype=np.int64), cols)), shape=(row, n))
    c = np.zeros(n)
    for h, lv in enumerate(levels):
        c[u_slices[h]] = -lv.gamma
    c[y0:y0 + R] = (ctx.targets == target).astype(float) - ctx.duals.beta
    ub = np.full(n, np.inf)
    ub[:n_u] = 1.0
    lp = LinearProgram(c, A, np.asarray(rhs), np.zeros(n), ub, offset=-float(ctx.duals.alpha[li]))
    return lp, np.arange(n_u), u_slices


def milp_price(ctx: PricingContext, leaf: int, target: int, *, tol: Tolerances = DEFAULT_TOL,
               time_limit: float | None = None) -> MilpPricing:
    """Solve the pricing MILP for ``(leaf, target)`` by branch-and-bound on ``u``."""
    li = ctx.topology.leaf_index(leaf)
    lp, ints, u_slices = build_pricing_program(ctx, li, target)
    res = solve_milp(MilpSpec(lp, ints, time_limit=time_limit), tol=tol)
    if res.x is None:
        return MilpPricing(None, -np.inf, res.proven)
    choice = tuple(int(np.argmax(res.x[s])) for s in u_slices)
    priced = ctx.priced(li, choice, target)
    if abs(priced.reduced_cost - res.objective) > 1e-6:
        log.warning("pricing MILP objective %.9g differs from recomputed %.9g",
                    res.objective, priced.reduced_cost)
    return MilpPricing(priced, res.objective, res.proven)


# -- randomised heuristic --------------------------------------------------

@dataclass
class HeuristicState:
    n_leaves: int
    capacity: int = 500
    draws: int = 200
    emit: int = 100
    seed: int = 0
    max_tries: int = 20
    weights: np.ndarray | None = None
    pool: dict[tuple[int, tuple[int, ...]], None] = field(default_factory=dict)   # insertion ordered
    failures: int = 0
    rng: np.random.Generator | None = None

    def __post_init__(self):
        if self.capacity < 1 or self.draws < 1 or self.emit < 1:
            raise ValueError("capacity, draws and emit must be positive")
        if self.weights is None:
            self.weights = np.ones(self.n_leaves)
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)
        self._check_weights()

    def _check_weights(self):
        w = self.weights
        if len(w) != self.n_leaves or (w < 0).any() or not w.any() or not np.isfinite(w).all():
            raise ValueError("leaf weights must be finite, nonnegative and not all zero")

    def reprioritise(self, best_by_leaf: np.ndarray, floor: float = 1e-3) -> None:
        """Clear the pool and weight each leaf by its best exact reduced cost."""
        self.pool.clear()
        self.weights = np.maximum(floor, np.nan_to_num(np.asarray(best_by_leaf, float), nan=0.0, neginf=0.0))
        self._check_weights()


def _draw_choice(ctx: PricingContext, li: int, state: HeuristicState) -> tuple[int, ...] | None:
    levels = ctx.levels[li]
    for _ in range(state.max_tries):
        choice = tuple(int(state.rng.integers(len(lv.splits))) for lv in levels)
        ids = [int(lv.ids[c]) for lv, c in zip(levels, choice)]
        if len(set(ids)) == len(ids):
            return choice
    return None


def heuristic_generate(ctx: PricingContext, state: HeuristicState) -> list[PricedPath]:
    """One round of randomised path construction from the candidate pool.

    Draws leaves with replacement by weight, builds one random distinct split
    tuple per draw, scores the whole pool under the current duals with the
    best target per tuple, and emits the top positive columns.
    """
    p = state.weights / state.weights.sum()
    for li in state.rng.choice(ctx.n_leaves, size=state.draws, p=p):
        choice = _draw_choice(ctx, int(li), state)
        if choice is not None:
            state.pool.setdefault((int(li), choice), None)
    entries = list(state.pool)
    rc = np.empty(len(entries))
    targets = np.empty(len(entries), dtype=np.int64)
    by_leaf: dict[int, list[int]] = {}
    for i, (li, _) in enumerate(entries):
        by_leaf.setdefault(li, []).append(i)
    for li, idx in by_leaf.items():
        reach = np.stack([ctx.reach(li, entries[i][1]) for i in idx])
        lv = ctx.levels[li]
        gam = np.array([sum(lv[h].gamma[c] for h, c in enumerate(entries[i][1])) for i in idx])
        scores = ctx.score_masks(li, reach, gam)
        t = scores.argmax(axis=1)    # first maximum = lowest class id
        rc[idx] = scores[np.arange(len(idx)), t]
        targets[idx] = t
    order = np.argsort(-rc, kind="stable")
    chosen = [int(i) for i in order[: state.emit] if rc[i] > POSITIVE]
    out = [ctx.priced(entries[i][0], entries[i][1], int(targets[i])) for i in chosen]
    for i in chosen:
        del state.pool[entries[i]]
    if len(state.pool) > state.capacity:
        keep = {entries[i] for i in order if entries[i] in state.pool}
        ranked = [entries[i] for i in order if entries[i] in keep][: state.capacity]
        state.pool = dict.fromkeys(ranked)
    state.failures = 0 if out else state.failures + 1
    return out


# -- all subproblems -------------------------------------------------------

@dataclass
class PricingRound:
    paths: list[PricedPath]                       # one per (leaf, target) in exact modes
    best_by_leaf: np.ndarray
    max_reduced_cost: float
    proven: bool = True
    complete: bool = True                         # False when a deadline cut the round short

    def improving(self) -> list[PricedPath]:
        return [p for p in self.paths if p.reduced_cost > POSITIVE]


def price_all(ctx: PricingContext, mode: str = "exact_enum", *, state: HeuristicState | None = None,
              deadline: float | None = None, tol: Tolerances = DEFAULT_TOL,
              trace: TextIO | None = None, iteration: int = 0) -> PricingRound:
    """Price every ``(leaf, target)`` subproblem in the chosen mode."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    best_by_leaf = np.full(ctx.n_leaves, -np.inf)
    if mode == "heuristic":
        if state is None:
            raise ValueError("heuristic pricing needs a HeuristicState")
        paths = heuristic_generate(ctx, state)
        for pp in paths:
            li = ctx.topology.leaf_index(pp.path.leaf)
            best_by_leaf[li] = max(best_by_leaf[li], pp.reduced_cost)
        top = max((pp.reduced_cost for pp in paths), default=-np.inf)
        return PricingRound(paths, best_by_leaf, top, proven=False)
    paths: list[PricedPath] = []
    proven, complete = True, True
    solved = 0
    for li in range(ctx.n_leaves):
        leaf = ctx.leaf_id(li)
        if mode == "exact_enum":
            best, arg = _best_per_target(ctx, li)
            for t in range(ctx.n_classes):
                if arg[t] is not None:
                    pp = ctx.priced(li, arg[t], t)
                    paths.append(pp)
                    _trace(trace, iteration, leaf, t, pp.reduced_cost)
            best_by_leaf[li] = best.max()
        else:
            for t in range(ctx.n_classes):
                left = None if deadline is None else max(0.0, deadline - time.monotonic())
                res = milp_price(ctx, leaf, t, tol=tol, time_limit=left)
                proven &= res.proven
                if res.priced is not None:
                    paths.append(res.priced)
                    best_by_leaf[li] = max(best_by_leaf[li], res.priced.reduced_cost)
                    _trace(trace, iteration, leaf, t, res.priced.reduced_cost)
                solved += 1
                if deadline is not None and solved % 10 == 0 and time.monotonic() > deadline:
                    complete = False
                    break
        if not complete or (deadline is not None and time.monotonic() > deadline and li < ctx.n_leaves - 1):
            complete = False
            break
    top = max((pp.reduced_cost for pp in paths), default=-np.inf)
    return PricingRound(paths, best_by_leaf, top, proven=proven and complete, complete=complete)


def _trace(fh: TextIO | None, iteration: int, leaf: int, target: int, rc: float) -> None:
    if fh is not None:
        fh.write(f"{iteration} {leaf} {target} {rc:.12g}\n")
