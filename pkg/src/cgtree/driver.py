"""End-to-end column generation run: sampling, warm start, pricing loop, integer recovery."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .cart import CartParams, CartTree, build
from .dataset import Dataset
from .master import MasterError, MasterModel, build_master
from .pricing import HeuristicState, PricingContext, columns_above, price_all
from .sampling import RestrictedSplits, SamplingParams, SamplingResult, align_cart_to_topology, run_threshold_sampling
from .solver import DEFAULT_TOL, Tolerances
from .tree import DecisionTree, RowSet, TreeError, paths_of_tree, tree_accuracy

log = logging.getLogger(__name__)

REASONS = ("lp_optimal", "time_limit", "heuristic_exhausted")
EXACT_MODES = ("enumerate", "milp")


@dataclass(frozen=True)
class CghConfig:
    depth: int = 2
    sampling: SamplingParams = SamplingParams()
    cart: CartParams | None = None          # defaults to plain CART of the run depth
    pool_capacity: int = 500
    leaf_draws: int = 200
    columns_per_round: int = 100
    failure_threshold: int = 3
    time_limit: float = 600.0
    big_data: bool | None = None            # None: decided by row count
    big_data_rows: int = 10_000
    seed: int = 0
    tol: Tolerances = DEFAULT_TOL
    exact_pricing: str = "enumerate"
    use_heuristic: bool = True
    close_gap: bool = True                  # make the final ILP exact over the restricted splits
    gap_column_limit: int = 2_000
    max_iterations: int | None = None

    def __post_init__(self):
        if not 1 <= self.depth <= 6:
            raise ValueError("depth must be between 1 and 6")
        if not self.time_limit > 0:
            raise ValueError("time limit must be positive")
        if self.exact_pricing not in EXACT_MODES:
            raise ValueError(f"exact_pricing must be one of {EXACT_MODES}")
        if min(self.pool_capacity, self.leaf_draws, self.columns_per_round, self.failure_threshold) < 1:
            raise ValueError("heuristic parameters must be positive")

    def is_big(self, n_rows: int) -> bool:
        return self.big_data if self.big_data is not None else n_rows > self.big_data_rows


@dataclass
class CghResult:
    tree: DecisionTree
    train_accuracy: float
    lp_bound: float
    ilp_objective: int
    lp_was_integral: bool
    iterations: int
    columns_generated: int
    wall_time: float
    termination: str
    restricted: RestrictedSplits
    cart_train_accuracy: float
    ilp_proven: bool = True
    lp_history: list[float] = field(default_factory=list)
    run_log: list[str] = field(default_factory=list)
    master: MasterModel | None = field(default=None, repr=False, compare=False)

    def log_text(self) -> str:
        return "\n".join(self.run_log) + "\n"


def _row_indices(train_rows, n: int) -> np.ndarray:
    if train_rows is None:
        return np.arange(n)
    if isinstance(train_rows, RowSet):
        return train_rows.indices()
    return np.asarray(train_rows, dtype=np.int64)


def _warm_for(d: Dataset, rows: np.ndarray, k: int, restricted: RestrictedSplits, cart: CartParams) -> tuple[DecisionTree, CartTree]:
    """Warm tree for caller-supplied split sets: CART when its splits fit, else a constant tree."""
    full = build(d, rows, cart)
    try:
        tree = align_cart_to_topology(full, k, restricted)
        for p in paths_of_tree(tree):
            p.validate(restricted)
        return tree, full
    except TreeError:
        stump = CartTree(k, {}, {0: full.targets[0]})
        return align_cart_to_topology(stump, k, restricted), full


def run_cgh(d: Dataset, train_rows=None, cfg: CghConfig = CghConfig(), *,
            restricted: RestrictedSplits | None = None, trace: TextIO | None = None) -> CghResult:
    """Learn a depth-``cfg.depth`` tree maximising correct training predictions.

    ``restricted`` skips threshold sampling and uses the given split sets.
    """
    start = time.monotonic()
    deadline = start + cfg.time_limit
    k = cfg.depth
    rows = _row_indices(train_rows, d.n_rows)
    if len(rows) < 2 ** k:
        raise ValueError(f"need at least {2 ** k} training rows for depth {k}")
    cart = cfg.cart if cfg.cart is not None else CartParams(max_depth=k)
    run_log: list[str] = []

    def note(msg: str) -> None:
        line = f"{time.monotonic() - start:9.3f}s {msg}"
        run_log.append(line)
        log.info(msg)

    if restricted is None:
        sampled: SamplingResult = run_threshold_sampling(d, rows, k, cfg.sampling, cart, deadline)
        restricted, warm_tree, full_cart = sampled.splits, sampled.warm_tree, sampled.full_cart
        note(f"sampling: {sampled.iterations} CART runs, split counts {[len(s) for s in restricted.by_node]}")
    else:
        if restricted.depth != k:
            raise ValueError("restricted splits do not match the configured depth")
        warm_tree, full_cart = _warm_for(d, rows, k, restricted, cart)
    cart_acc = full_cart.accuracy(d, rows)

    master = build_master(restricted, paths_of_tree(warm_tree), d, rows, cfg.tol)
    big = cfg.is_big(len(rows))
    exact_mode = "exact_enum" if cfg.exact_pricing == "enumerate" else "milp"
    state = HeuristicState(master.topology.n_leaves, cfg.pool_capacity, cfg.leaf_draws,
                           cfg.columns_per_round, seed=cfg.seed)
    reason = None
    iterations = generated = 0
    rel = None
    while True:
        try:
            # the first LP always runs to completion so a result exists
            rel = master.solve_relaxation(deadline if rel is not None else None)
        except MasterError as exc:
            if rel is None or "limit" not in str(exc):
                raise
            reason = "time_limit"
            break
        iterations += 1
        hist = master.objective_history
        if len(hist) > 1 and hist[-1] < hist[-2] - 1e-6:
            log.warning("master objective decreased from %.9g to %.9g", hist[-2], hist[-1])
        if rel.objective >= len(rows) - cfg.tol.integrality:
            # every row classified correctly: no column set can do better
            note(f"iter {iterations} lp {rel.objective:.6f} bound reached")
            reason = "lp_optimal"
            break
        if time.monotonic() > deadline:
            reason = "time_limit"
            break
        if cfg.max_iterations is not None and iterations >= cfg.max_iterations:
            reason = "time_limit"
            break
        ctx = PricingContext(master, rel.duals)
        if cfg.use_heuristic and state.failures < cfg.failure_threshold:
            found = price_all(ctx, "heuristic", state=state).paths
            added = master.add_columns(pp.column for pp in found)
            if found and not added:
                state.failures += 1
            generated += added
            note(f"iter {iterations} lp {rel.objective:.6f} heuristic +{added}")
            continue
        if big:
            reason = "heuristic_exhausted"
            break
        rnd = price_all(ctx, exact_mode, deadline=deadline, tol=cfg.tol, trace=trace, iteration=iterations)
        improving = rnd.improving()
        added = master.add_columns(pp.column for pp in improving)
        generated += added
        note(f"iter {iterations} lp {rel.objective:.6f} exact +{added} max rc {rnd.max_reduced_cost:.3g}")
        if added:
            state.reprioritise(rnd.best_by_leaf)
            state.failures = 0
            continue
        if improving:
            log.warning("exact pricing returned only installed columns; treating the LP as optimal")
        reason = "lp_optimal" if rnd.complete and rnd.proven else "time_limit"
        break

    lp_bound = rel.objective
    integral = rel.integral
    proven = True
    if integral:
        tree = master.tree_from_solution(rel.x)
    else:
        left = max(1.0, deadline - time.monotonic())
        tree, milp = master.solve_integer(warm_tree, time_limit=left)
        proven = milp.proven
        note(f"ilp: {milp.status}, objective {milp.objective:.0f}, bound {milp.bound:.3f}, {milp.nodes} nodes")
        z = round(milp.objective)
        if cfg.close_gap and reason == "lp_optimal" and z < math.floor(lp_bound + 1e-6):
            tree, proven = _close_gap(master, rel, z, tree, deadline, cfg, note) or (tree, proven)
    correct = int(round(tree_accuracy(tree, d, rows) * len(rows)))
    note(f"done: {reason}, lp {lp_bound:.6f}, ilp {correct}, integral {integral}")
    return CghResult(tree, correct / len(rows), lp_bound, correct, integral, iterations, generated,
                     time.monotonic() - start, reason, restricted, cart_acc, proven,
                     list(master.objective_history), run_log, master)


def _close_gap(master: MasterModel, rel, z: int, incumbent: DecisionTree, deadline: float, cfg: CghConfig, note):
    """Install every column that could appear in a strictly better integer solution and re-solve.

    With all reduced costs nonpositive at the LP optimum, an integer point of
    value at least ``z + 1`` only uses columns whose reduced cost is at least
    ``z + 1 - lp``.
    """
    threshold = z + 1 - rel.objective - 1e-6
    ctx = PricingContext(master, rel.duals)
    cols = columns_above(ctx, threshold, cfg.gap_column_limit)
    if cols is None:
        note(f"gap closing skipped: more than {cfg.gap_column_limit} candidate columns")
        return None
    added = master.add_columns(cols)
    left = max(1.0, deadline - time.monotonic())
    tree, milp = master.solve_integer(incumbent, time_limit=left)
    note(f"gap closing: +{added} columns, ilp {milp.objective:.0f}")
    return tree, milp.proven


def evaluate(result: CghResult, d: Dataset, test_rows) -> float:
    """Accuracy of the learned tree on held-out rows."""
    rows = _row_indices(test_rows, d.n_rows)
    if len(rows) == 0:
        raise ValueError("no test rows")
    return tree_accuracy(result.tree, d, rows)
