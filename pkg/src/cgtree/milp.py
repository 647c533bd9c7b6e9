"""Best-bound branch-and-bound over :func:`solve_lp` relaxations."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .solver import DEFAULT_TOL, Basis, LinearProgram, Tolerances, solve_lp


@dataclass
class MilpSpec:
    lp: LinearProgram
    integer_vars: np.ndarray
    incumbent: np.ndarray | None = None
    node_limit: int = 100_000
    time_limit: float | None = None
    objective_integral: bool = False   # objective takes integer values on integer points

    def __post_init__(self):
        self.integer_vars = np.asarray(self.integer_vars, dtype=np.int64)
        if len(self.integer_vars) and (self.integer_vars.min() < 0 or self.integer_vars.max() >= self.lp.n):
            raise ValueError("integer variable index out of range")


@dataclass
class MilpResult:
    status: str          # optimal | infeasible | limit
    x: np.ndarray | None
    objective: float
    bound: float
    nodes: int

    @property
    def proven(self) -> bool:
        return self.status == "optimal"


def _most_fractional(x: np.ndarray, ints: np.ndarray, tol: float) -> int:
    frac = np.abs(x[ints] - np.round(x[ints]))
    i = int(np.argmax(frac))  # first maximum = lowest index among ties
    return -1 if frac[i] <= tol else int(ints[i])


def _feasible(p: LinearProgram, x: np.ndarray, ints: np.ndarray, tol: Tolerances) -> bool:
    slack = tol.feasibility * (1 + np.abs(p.b).max(initial=0.0)) * 10
    if np.abs(p.A @ x - p.b).max(initial=0.0) > slack:
        return False
    if (x < p.lb - slack).any() or (x > p.ub + slack).any():
        return False
    return bool(np.all(np.abs(x[ints] - np.round(x[ints])) <= tol.integrality))


def solve_milp(m: MilpSpec, *, tol: Tolerances = DEFAULT_TOL, root_basis: Basis | None = None) -> MilpResult:
    """Maximise over integral values of ``m.integer_vars``.

    Branches on the most fractional designated variable, explores open nodes
    best bound first and prunes a node once its LP bound cannot beat the
    incumbent by more than the integrality tolerance.
    """
    p, ints = m.lp, m.integer_vars
    deadline = None if m.time_limit is None else time.monotonic() + m.time_limit
    best_x, best_obj = None, -math.inf
    if m.incumbent is not None and _feasible(p, np.asarray(m.incumbent, float), ints, tol):
        best_x = np.asarray(m.incumbent, float).copy()
        best_obj = float(p.c @ best_x + p.offset)

    def beats(bound: float) -> bool:
        if m.objective_integral and best_x is not None:
            return math.floor(bound + tol.integrality) > best_obj + tol.integrality
        return bound > best_obj + tol.integrality

    counter = itertools.count()
    nodes = 0
    root = solve_lp(p, root_basis, tol=tol, deadline=deadline)
    nodes += 1
    if root.status == "limit":
        return MilpResult("limit", best_x, best_obj, math.inf, nodes)
    if root.status == "unbounded":
        raise ValueError("MILP relaxation is unbounded")
    heap: list = []
    if root.status == "optimal":
        heapq.heappush(heap, (-root.objective, next(counter), p.lb.copy(), p.ub.copy(), root))
    limited = False
    interrupted = -math.inf   # bound of a node whose children were not all solved
    while heap:
        if nodes >= m.node_limit or (deadline is not None and time.monotonic() > deadline):
            limited = True
            break
        neg_bound, _, lb, ub, sol = heapq.heappop(heap)
        if not beats(-neg_bound):
            continue
        j = _most_fractional(sol.x, ints, tol.integrality)
        if j < 0:
            x = sol.x.copy()
            x[ints] = np.round(x[ints])
            best_x, best_obj = x, float(p.c @ x + p.offset)
            continue
        v = sol.x[j]
        for lo, hi in ((lb[j], math.floor(v)), (math.ceil(v), ub[j])):
            if hi < lo:
                continue
            clb, cub = lb.copy(), ub.copy()
            clb[j], cub[j] = lo, hi
            child = solve_lp(p.with_bounds(clb, cub), sol.basis, tol=tol, deadline=deadline)
            nodes += 1
            if child.status == "limit":
                limited = True
                interrupted = -neg_bound
                break
            if child.status == "optimal" and beats(child.objective):
                heapq.heappush(heap, (-child.objective, next(counter), clb, cub, child))
        if limited:
            break
    if limited:
        open_bound = max(max((-h[0] for h in heap), default=-math.inf), interrupted)
        return MilpResult("limit", best_x, best_obj, max(open_bound, best_obj), nodes)
    if best_x is None:
        return MilpResult("infeasible", None, -math.inf, -math.inf, nodes)
    return MilpResult("optimal", best_x, best_obj, best_obj, nodes)
