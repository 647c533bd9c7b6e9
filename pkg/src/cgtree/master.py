"""Path-selection master problem.

Rows, in order: one per leaf (pick exactly one path), one per training row
(each row reaches exactly one leaf), and one per ``(leaf, node on its path,
allowed split)`` tying the chosen paths to a shared split variable
``rho[node, split]``. Variables: all ``rho`` first, then one ``x`` per
generated column. Only ``x, rho >= 0`` is imposed in the relaxation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .dataset import Dataset
from .milp import MilpResult, MilpSpec, solve_milp
from .sampling import RestrictedSplits
from .solver import DEFAULT_TOL, LinearProgram, LpSolution, Tolerances, solve_lp, to_lp_text
from .tree import DecisionPath, DecisionTree, RowSet, Split, SplitMasks, Topology, TreeError, tree_from_paths

log = logging.getLogger(__name__)


class MasterError(RuntimeError):
    pass


@dataclass(frozen=True)
class Column:
    path: DecisionPath
    cp: int
    rows: RowSet

    @property
    def key(self) -> tuple:
        return self.path.key


@dataclass
class DualValues:
    alpha: np.ndarray                            # per leaf, left to right
    beta: np.ndarray                             # per training row
    gamma: dict[tuple[int, int, Split], float]   # per (leaf id, node, split)


@dataclass
class Relaxation:
    objective: float
    duals: DualValues
    x: np.ndarray            # one value per column, in column order
    integral: bool
    solution: LpSolution


class MasterModel:
    def __init__(self, restricted: RestrictedSplits, d: Dataset, tol: Tolerances = DEFAULT_TOL):
        self.d = d
        self.tol = tol
        self.restricted = restricted
        self.topology = topo = Topology(restricted.depth)
        self.masks = SplitMasks(d, restricted.all_splits())
        self.class_sets = [RowSet.from_mask(d.targets == t) for t in range(d.n_classes)]
        n_leaves, n_rows = topo.n_leaves, d.n_rows
        self.rho_index: dict[tuple[int, Split], int] = {}
        for j in topo.internal_nodes:
            if not restricted[j]:
                raise MasterError(f"node {j} has no allowed splits")
            for s in restricted[j]:
                self.rho_index[(j, s)] = len(self.rho_index)
        self.gamma_index: dict[tuple[int, int, Split], int] = {}
        base = n_leaves + n_rows
        for leaf in topo.leaves:
            for j in topo.path(leaf):
                for s in restricted[j]:
                    self.gamma_index[(leaf, j, s)] = base + len(self.gamma_index)
        self.n_rows_lp = base + len(self.gamma_index)
        # rho columns: -1 in every (leaf below j, j, s) row
        rows, cols = [], []
        for (j, s), v in self.rho_index.items():
            for leaf in topo.leaves_below(j):
                rows.append(self.gamma_index[(leaf, j, s)])
                cols.append(v)
        A = sp.csc_matrix((-np.ones(len(rows)), (rows, cols)), shape=(self.n_rows_lp, len(self.rho_index)))
        b = np.concatenate([np.ones(base), np.zeros(len(self.gamma_index))])
        self.lp = LinearProgram(np.zeros(len(self.rho_index)), A, b)
        self.columns: list[Column] = []
        self.keys: dict[tuple, int] = {}
        self.last: LpSolution | None = None
        self.objective_history: list[float] = []

    # -- columns ---------------------------------------------------------
    @property
    def n_rho(self) -> int:
        return len(self.rho_index)

    def leaf_row(self, leaf: int) -> int:
        return self.topology.leaf_index(leaf)

    def make_column(self, path: DecisionPath) -> Column:
        """Validate ``path`` against the allowed splits and compute R^l(p), CP(p)."""
        path.validate(self.restricted, self.d.n_classes)
        reach = RowSet.full(self.d.n_rows)
        for (j, left), s in zip(self.topology.path_directions(path.leaf), path.splits):
            m = self.masks.rowset(s)
            reach = reach & m if left else reach - m
        return Column(path, len(reach & self.class_sets[path.target]), reach)

    def _coefficients(self, col: Column) -> tuple[np.ndarray, np.ndarray]:
        p = col.path
        n_leaves = self.topology.n_leaves
        rows = [self.leaf_row(p.leaf)]
        rows.extend(n_leaves + col.rows.indices())
        rows.extend(self.gamma_index[(p.leaf, j, s)] for j, s in zip(self.topology.path(p.leaf), p.splits))
        return np.asarray(rows, dtype=np.int64), np.ones(len(rows))

    def add_columns(self, cols: Iterable[Column | DecisionPath]) -> int:
        """Install new columns; duplicates (same leaf, splits and target) are skipped."""
        fresh: list[Column] = []
        for c in cols:
            try:
                if isinstance(c, DecisionPath):
                    c = self.make_column(c)
                else:
                    c.path.validate(self.restricted, self.d.n_classes)
            except TreeError as exc:
                raise MasterError(str(exc)) from None
            if c.key in self.keys:
                continue
            self.keys[c.key] = len(self.columns) + len(fresh)
            fresh.append(c)
        if not fresh:
            return 0
        indptr, indices = [0], []
        for c in fresh:
            r, _ = self._coefficients(c)
            indices.append(r)
            indptr.append(indptr[-1] + len(r))
        indices = np.concatenate(indices)
        block = sp.csc_matrix((np.ones(len(indices)), indices, np.asarray(indptr)),
                              shape=(self.n_rows_lp, len(fresh)))
        lp = self.lp
        self.lp = LinearProgram(np.concatenate([lp.c, [c.cp for c in fresh]]),
                                sp.hstack([lp.A, block], format="csc"), lp.b,
                                np.concatenate([lp.lb, np.zeros(len(fresh))]),
                                np.concatenate([lp.ub, np.full(len(fresh), np.inf)]))
        self.columns.extend(fresh)
        return len(fresh)

    # -- solving ---------------------------------------------------------
    def solve_relaxation(self, deadline: float | None = None) -> Relaxation:
        if not self.columns:
            raise MasterError("master has no path columns")
        warm = self.last.basis if self.last is not None else None
        sol = solve_lp(self.lp, warm, tol=self.tol, deadline=deadline)
        if sol.status != "optimal":
            raise MasterError(f"master LP {sol.status}")
        self.last = sol
        self.objective_history.append(sol.objective)
        x = sol.x[self.n_rho:]
        integral = bool(np.all(np.minimum(np.abs(x), np.abs(x - 1)) <= self.tol.integrality))
        return Relaxation(sol.objective, self.unpack_duals(sol.duals), x, integral, sol)

    def unpack_duals(self, y: np.ndarray) -> DualValues:
        n_leaves, n_rows = self.topology.n_leaves, self.d.n_rows
        gamma = {key: float(y[row]) for key, row in self.gamma_index.items()}
        return DualValues(y[:n_leaves].copy(), y[n_leaves:n_leaves + n_rows].copy(), gamma)

    def selected(self, x: np.ndarray) -> list[Column]:
        return [c for c, v in zip(self.columns, x) if v > 0.5]

    def tree_from_solution(self, x: np.ndarray) -> DecisionTree:
        return tree_from_paths(c.path for c in self.selected(x))

    def incumbent_vector(self, tree: DecisionTree) -> np.ndarray | None:
        """Full LP vector for ``tree`` if all its paths are installed columns."""
        from .tree import paths_of_tree
        x = np.zeros(self.lp.n)
        topo = self.topology
        for p in paths_of_tree(tree):
            i = self.keys.get(p.key)
            if i is None:
                return None
            x[self.n_rho + i] = 1.0
        for j in topo.internal_nodes:
            idx = self.rho_index.get((j, tree.splits[j]))
            if idx is None:
                return None
            x[idx] = 1.0
        return x

    def solve_integer(self, incumbent: DecisionTree | None = None, time_limit: float | None = None) -> tuple[DecisionTree, MilpResult]:
        """Branch-and-bound over the path variables of the installed columns."""
        inc = self.incumbent_vector(incumbent) if incumbent is not None else None
        spec = MilpSpec(self.lp, np.arange(self.n_rho, self.lp.n), inc,
                        time_limit=time_limit, objective_integral=True)
        res = solve_milp(spec, tol=self.tol, root_basis=self.last.basis if self.last is not None else None)
        if res.x is None:
            raise MasterError(f"no integral solution found ({res.status})")
        return self.tree_from_solution(res.x[self.n_rho:]), res

    def to_lp_text(self) -> str:
        names = [f"rho_{j}_f{s.feature}_{s.threshold:g}" for (j, s) in self.rho_index]
        names += [f"x_{i}" for i in range(len(self.columns))]
        lp = self.lp
        named = LinearProgram(lp.c, lp.A, lp.b, lp.lb, lp.ub, lp.offset, names)
        return to_lp_text(named, range(self.n_rho, lp.n))


def build_master(restricted: RestrictedSplits, warm_paths: Sequence[DecisionPath], d: Dataset,
                 train_rows=None, tol: Tolerances = DEFAULT_TOL) -> MasterModel:
    """Create the master over ``train_rows`` of ``d`` with the warm-start paths installed."""
    if train_rows is not None:
        idx = train_rows.indices() if isinstance(train_rows, RowSet) else np.asarray(train_rows, dtype=np.int64)
        d = d.subset(idx)
    try:
        tree_from_paths(warm_paths)
        for p in warm_paths:
            p.validate(restricted, d.n_classes)
    except TreeError as exc:
        raise MasterError(f"infeasible warm start: {exc}") from None
    m = MasterModel(restricted, d, tol)
    m.add_columns(warm_paths)
    return m
