"""Revised primal simplex for ``max c.x  s.t.  A x = b,  lb <= x <= ub``.

Bounded-variable two-phase method. The basis is held as a sparse LU factor
plus a product-form eta file, refactored every ``REFACTOR_EVERY`` pivots.
Phase 1 uses one artificial per row; afterwards the artificials are fixed at
zero and left in place, so a redundant row simply keeps its artificial basic.
A finished :class:`Basis` can seed the next solve after columns are appended
(the old basis stays primal feasible, so phase 1 is skipped).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

log = logging.getLogger(__name__)

REFACTOR_EVERY = 100
DEGENERATE_BEFORE_BLAND = 500
PERTURB_AFTER = 10        # degenerate pivots in a row before bounds are perturbed
PERTURBATION = 1e-6
HARRIS = 1e-9
DEVEX_RESET = 1e6


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-7
    optimality: float = 1e-9
    pivot: float = 1e-7
    integrality: float = 1e-6


DEFAULT_TOL = Tolerances()


class NumericalFailure(RuntimeError):
    """Singular basis or pivot below tolerance; distinct from infeasible/unbounded."""


@dataclass
class LinearProgram:
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    offset: float = 0.0
    col_names: list[str] | None = None
    row_names: list[str] | None = None

    def __post_init__(self):
        self.A = sp.csc_matrix(self.A, dtype=float)
        m, n = self.A.shape
        self.c = np.asarray(self.c, dtype=float).reshape(n)
        self.b = np.asarray(self.b, dtype=float).reshape(m)
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).reshape(n)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).reshape(n)
        if not np.isfinite(self.b).all():
            raise ValueError("right-hand side must be finite")
        if not np.isfinite(self.lb).all():
            raise ValueError("lower bounds must be finite")
        if (self.ub < self.lb).any():
            raise ValueError("upper bound below lower bound")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.b, lb, ub, self.offset, self.col_names, self.row_names)


@dataclass(frozen=True)
class Basis:
    head: np.ndarray       # basic variable per row; -(i+1) is the artificial of row i
    at_upper: np.ndarray   # structural nonbasics resting at their upper bound
    art_sign: np.ndarray


@dataclass
class LpSolution:
    status: str            # optimal | infeasible | unbounded | limit
    x: np.ndarray
    duals: np.ndarray
    objective: float
    basis: Basis | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _Factor:
    def __init__(self, B: sp.csc_matrix):
        try:
            self.lu = splu(sp.csc_matrix(B), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise NumericalFailure(f"basis factorization failed: {exc}") from None
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        v = self.lu.solve(a)
        for r, w in self.etas:
            vr = v[r] / w[r]
            v -= w * vr
            v[r] = vr
        return v

    def btran(self, c: np.ndarray) -> np.ndarray:
        v = np.array(c, dtype=float)
        for r, w in reversed(self.etas):
            v[r] = (v[r] - (w @ v - w[r] * v[r])) / w[r]
        return self.lu.solve(v, trans="T")


class _Simplex:
    def __init__(self, p: LinearProgram, tol: Tolerances, deadline: float | None, max_iter: int):
        self.p, self.tol = p, tol
        self.m, self.n = p.m, p.n
        self.deadline, self.max_iter = deadline, max_iter
        self.iterations = 0
        # working bounds (may be perturbed) and the true ones
        self.lb = np.concatenate([p.lb, np.zeros(self.m)])
        self.ub = np.concatenate([p.ub, np.full(self.m, np.inf)])
        self.perturbed = np.zeros(self.n + self.m, dtype=bool)
        self.rng = np.random.default_rng(12345)

    # -- setup ---------------------------------------------------------
    def _attach(self, art_sign: np.ndarray):
        self.art_sign = art_sign
        art = sp.csc_matrix((art_sign, (np.arange(self.m), np.arange(self.m))), shape=(self.m, self.m))
        self.A = sp.hstack([self.p.A, art], format="csc")
        self.AT = self.A.T.tocsr()
        self.lb0, self.ub0 = self.lb.copy(), self.ub.copy()

    def _column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        s, e = self.A.indptr[j], self.A.indptr[j + 1]
        col[self.A.indices[s:e]] = self.A.data[s:e]
        return col

    def _refactor(self):
        self.factor = _Factor(self.A[:, self.head])
        xn = np.where(self.basic, 0.0, self.x)
        self.x[self.head] = self.factor.ftran(self.p.b - self.A @ xn)

    def fix_artificials(self):
        """End of phase 1: artificials may no longer move."""
        self.ub[self.n:] = self.ub0[self.n:] = 0.0
        self.x[self.n:][~self.basic[self.n:]] = 0.0
        self.at_upper[self.n:] = False

    def cold_start(self):
        at_upper = np.zeros(self.n + self.m, dtype=bool)
        xs = self.p.lb.copy()
        r = self.p.b - self.p.A @ xs
        sign = np.where(r < 0, -1.0, 1.0)
        self._attach(sign)
        self.x = np.concatenate([xs, np.abs(r)])
        self.at_upper = at_upper
        self.head = np.arange(self.n, self.n + self.m)
        self.basic = np.zeros(self.n + self.m, dtype=bool)
        self.basic[self.head] = True
        self.factor = _Factor(self.A[:, self.head])

    def warm_start(self, basis: Basis) -> str | None:
        """Install ``basis`` (artificials fixed at zero).

        Returns ``"primal"`` if it is primal feasible, ``"install"`` if it
        merely factorises, and ``None`` if it is unusable.
        """
        if len(basis.head) != self.m or len(basis.art_sign) != self.m:
            return None
        head = np.where(basis.head < 0, self.n - basis.head - 1, basis.head)
        if (head >= self.n + self.m).any() or len(np.unique(head)) != self.m:
            return None
        self.ub[self.n:] = 0.0
        self._attach(np.asarray(basis.art_sign, dtype=float))
        at_upper = np.zeros(self.n + self.m, dtype=bool)
        k = min(len(basis.at_upper), self.n)
        at_upper[:k] = basis.at_upper[:k]
        at_upper &= np.isfinite(self.ub)
        self.at_upper = at_upper
        self.head = head
        self.basic = np.zeros(self.n + self.m, dtype=bool)
        self.basic[head] = True
        self.at_upper[self.basic] = False
        self.x = np.where(self.at_upper, self.ub, self.lb)
        try:
            self._refactor()
        except NumericalFailure:
            return None
        return "primal" if self.primal_feasible() else "install"

    def primal_feasible(self) -> bool:
        xb = self.x[self.head]
        slack = self.tol.feasibility * (1.0 + np.abs(self.p.b).max(initial=0.0))
        return bool(np.all(xb >= self.lb[self.head] - slack) and np.all(xb <= self.ub[self.head] + slack))

    def dual_feasible(self, cost: np.ndarray) -> bool:
        d = cost - self.AT @ self.factor.btran(cost[self.head])
        movable = ~self.basic & (self.ub > self.lb)
        tol = 10 * self.tol.optimality * (1.0 + np.abs(cost).max(initial=0.0))
        bad = movable & ((~self.at_upper & (d > tol)) | (self.at_upper & (d < -tol)))
        return not bad.any()

    def _out_of_budget(self) -> bool:
        return self.iterations >= self.max_iter or (
            self.deadline is not None and self.iterations % 50 == 0 and time.monotonic() > self.deadline)

    # -- perturbation --------------------------------------------------
    def _perturb(self):
        """Widen the bounds of basic structurals by tiny random amounts to break a stall."""
        idx = self.head[(self.head < self.n) & ~self.perturbed[self.head]]
        idx = idx[self.ub[idx] > self.lb[idx]]
        if not len(idx):
            return
        scale = PERTURBATION * (1.0 + self.rng.random(len(idx)))
        self.lb[idx] -= scale * (1.0 + np.abs(self.lb[idx]))
        fin = np.isfinite(self.ub[idx])
        self.ub[idx[fin]] += scale[fin] * (1.0 + np.abs(self.ub[idx[fin]]))
        self.perturbed[idx] = True

    def _unperturb(self) -> bool:
        if not self.perturbed.any():
            return False
        self.lb[:], self.ub[:] = self.lb0, self.ub0
        self.perturbed[:] = False
        nb = ~self.basic
        self.x[nb] = np.where(self.at_upper[nb], self.ub[nb], self.lb[nb])
        self._refactor()
        return True

    def optimise(self, cost: np.ndarray) -> str:
        """Primal simplex with perturbation, then clean-up once bounds are restored."""
        status = self.primal(cost, perturb=True)
        if status != "optimal" or not self._unperturb():
            return status
        if not self.primal_feasible():
            status = self.dual(cost)
            if status != "optimal":
                return status
        return self.primal(cost, perturb=False)

    # -- primal simplex ------------------------------------------------
    def primal(self, cost: np.ndarray, perturb: bool = True) -> str:
        tol = self.tol
        degenerate = 0
        bland = False
        movable = self.ub > self.lb
        weights = np.ones(self.n + self.m)     # devex reference weights
        unit = np.zeros(self.m)
        while True:
            if self._out_of_budget():
                return "limit"
            if len(self.factor.etas) >= REFACTOR_EVERY:
                self._refactor()
            y = self.factor.btran(cost[self.head])
            d = cost - self.AT @ y
            up = ~self.basic & ~self.at_upper & movable & (d > tol.optimality)
            down = ~self.basic & self.at_upper & (d < -tol.optimality)
            elig = up | down
            if not elig.any():
                return "optimal"
            if bland:
                q = int(np.flatnonzero(elig)[0])
            else:
                q = int(np.argmax(np.where(elig, d * d / weights, -1.0)))
            s = 1.0 if up[q] else -1.0
            w = self.factor.ftran(self._column(q))
            g = s * w
            xb = self.x[self.head]
            lbb, ubb = self.lb[self.head], self.ub[self.head]
            dec = g > tol.pivot
            inc = (g < -tol.pivot) & np.isfinite(ubb)
            ratio = np.full(self.m, np.inf)
            ratio[dec] = (xb[dec] - lbb[dec]) / g[dec]
            ratio[inc] = (ubb[inc] - xb[inc]) / -g[inc]
            ratio = np.maximum(ratio, 0.0)
            span = self.ub[q] - self.lb[q]
            if bland:
                theta = ratio.min(initial=np.inf)
                r = -1
                if np.isfinite(theta):
                    ties = np.flatnonzero(ratio <= theta + 1e-12)
                    r = int(ties[np.argmin(self.head[ties])])
            else:
                relaxed = np.full(self.m, np.inf)
                relaxed[dec] = (xb[dec] - lbb[dec] + HARRIS) / g[dec]
                relaxed[inc] = (ubb[inc] - xb[inc] + HARRIS) / -g[inc]
                tmax = max(relaxed.min(initial=np.inf), 0.0)
                r = -1
                theta = np.inf
                if np.isfinite(tmax):
                    cand = np.flatnonzero(ratio <= tmax)
                    r = int(cand[np.argmax(np.abs(g[cand]))])
                    theta = ratio[r]
            if np.isfinite(span) and span <= theta:
                # entering variable reaches its own opposite bound first
                theta = span
                self.x[self.head] -= theta * g
                self.at_upper[q] = not self.at_upper[q]
                self.x[q] = self.ub[q] if self.at_upper[q] else self.lb[q]
                self.iterations += 1
                degenerate, bland = 0, False
                continue
            if r < 0:
                return "unbounded"
            if not bland:
                weights = self._devex(weights, r, q, w[r], unit)
            self._pivot(r, q, w, s * theta, g[r] < 0)
            if theta <= HARRIS:
                degenerate += 1
                if perturb and degenerate % PERTURB_AFTER == 0:
                    self._perturb()
                    movable = self.ub > self.lb
                elif degenerate > DEGENERATE_BEFORE_BLAND and not bland:
                    log.debug("switching to Bland's rule after %d degenerate pivots", degenerate)
                    bland = True
            else:
                degenerate, bland = 0, False

    def _devex(self, weights: np.ndarray, r: int, q: int, pivot: float, unit: np.ndarray) -> np.ndarray:
        """Update devex reference weights for entering ``q`` and pivot row ``r``."""
        unit[r] = 1.0
        row = self.AT @ self.factor.btran(unit)
        unit[r] = 0.0
        ratio = row / pivot
        wq = weights[q]
        nb = ~self.basic
        weights[nb] = np.maximum(weights[nb], ratio[nb] ** 2 * wq)
        weights[self.head[r]] = max(wq / pivot ** 2, 1.0)
        if weights.max() > DEVEX_RESET:
            weights[:] = 1.0
        return weights

    def _pivot(self, r: int, q: int, w: np.ndarray, step: float, leaves_at_upper: bool):
        """Move ``x_q`` by ``step``; basic variable ``r`` leaves at the given bound."""
        self.x[self.head] -= step * w
        self.x[q] += step
        leaving = self.head[r]
        self.x[leaving] = self.ub[leaving] if leaves_at_upper else self.lb[leaving]
        self.at_upper[leaving] = leaves_at_upper
        self.basic[leaving] = False
        self.basic[q] = True
        self.at_upper[q] = False
        self.head[r] = q
        self.factor.etas.append((r, w))
        self.iterations += 1

    # -- dual simplex --------------------------------------------------
    def dual(self, cost: np.ndarray) -> str:
        """Bounded dual simplex from a dual feasible basis; restores primal feasibility."""
        tol = self.tol
        movable = self.ub > self.lb
        ftol = tol.feasibility * (1.0 + np.abs(self.p.b).max(initial=0.0))
        unit = np.zeros(self.m)
        while True:
            if self._out_of_budget():
                return "limit"
            if len(self.factor.etas) >= REFACTOR_EVERY:
                self._refactor()
            xb = self.x[self.head]
            lbb, ubb = self.lb[self.head], self.ub[self.head]
            below, above = lbb - xb, xb - ubb
            viol = np.maximum(below, above)
            r = int(np.argmax(viol))
            if viol[r] <= ftol:
                return "optimal"
            up = below[r] >= above[r]           # x_B[r] must increase to its lower bound
            d = cost - self.AT @ self.factor.btran(cost[self.head])
            unit[r] = 1.0
            alpha = self.AT @ self.factor.btran(unit)
            unit[r] = 0.0
            a = alpha if up else -alpha
            free = ~self.basic & movable
            at_lo = free & ~self.at_upper & (a < -tol.pivot)
            at_hi = free & self.at_upper & (a > tol.pivot)
            cand = np.flatnonzero(at_lo | at_hi)
            if not len(cand):
                return "infeasible"
            dj = np.where(at_lo[cand], np.maximum(-d[cand], 0.0), np.maximum(d[cand], 0.0))
            aj = np.abs(a[cand])
            tmax = ((dj + tol.optimality) / aj).min()
            ok = cand[dj / aj <= tmax]
            q = int(ok[np.argmax(np.abs(a[ok]))])
            w = self.factor.ftran(self._column(q))
            if abs(w[r]) < tol.pivot:
                self._refactor()
                w = self.factor.ftran(self._column(q))
                if abs(w[r]) < tol.pivot:
                    raise NumericalFailure(f"dual pivot {w[r]:.3e} below tolerance")
            target = lbb[r] if up else ubb[r]
            step = (xb[r] - target) / w[r]
            self._pivot(r, q, w, step, not up)

    def basis(self) -> Basis:
        head = np.where(self.head >= self.n, -(self.head - self.n) - 1, self.head)
        return Basis(head.copy(), self.at_upper[: self.n].copy(), self.art_sign.copy())


def solve_lp(p: LinearProgram, warm_basis: Basis | None = None, *, tol: Tolerances = DEFAULT_TOL,
             deadline: float | None = None, max_iter: int | None = None) -> LpSolution:
    """Solve ``p`` to optimality, returning primal values, duals and the final basis.

    Duals ``y`` satisfy ``c_j - y.A_j <= 0`` for structurals at their lower
    bound. A warm basis that is primal feasible restarts the primal simplex;
    one that is only dual feasible (typically after bounds were tightened)
    restarts the dual simplex. ``deadline`` is a :func:`time.monotonic`
    instant; hitting it or ``max_iter`` yields status ``"limit"``.
    """
    m, n = p.m, p.n
    max_iter = max_iter if max_iter is not None else 50 * (m + n) + 1000
    if m == 0:
        return _trivial(p)
    cost = np.concatenate([p.c, np.zeros(m)])
    if warm_basis is not None:
        sx = _Simplex(p, tol, deadline, max_iter)
        try:
            state = sx.warm_start(warm_basis)
            status = None
            if state == "primal":
                status = sx.optimise(cost)
            elif state == "install" and sx.dual_feasible(cost):
                status = sx.dual(cost)
                if status == "optimal":
                    status = sx.optimise(cost)
            if status is not None:
                sx._refactor()
                return _result(sx, status, cost)
        except NumericalFailure as exc:
            log.debug("warm start abandoned: %s", exc)
    sx = _Simplex(p, tol, deadline, max_iter)
    sx.cold_start()
    phase1 = np.concatenate([np.zeros(n), -np.ones(m)])
    status = sx.optimise(phase1)
    if status == "limit":
        return _result(sx, "limit", phase1)
    sx._refactor()
    infeas = sx.x[n:].sum()
    if infeas > tol.feasibility * (1.0 + np.abs(p.b).max(initial=0.0)):
        return _result(sx, "infeasible", phase1)
    sx.fix_artificials()
    status = sx.optimise(cost)
    sx._refactor()
    return _result(sx, status, cost)


def _result(sx: _Simplex, status: str, cost: np.ndarray) -> LpSolution:
    n = sx.n
    y = sx.factor.btran(cost[sx.head])
    d = (cost - sx.AT @ y)[:n]
    x = sx.x[:n].copy()
    obj = float(sx.p.c @ x + sx.p.offset)
    return LpSolution(status, x, y, obj, sx.basis(), d, sx.iterations)


def _trivial(p: LinearProgram) -> LpSolution:
    if ((p.c > 0) & ~np.isfinite(p.ub)).any():
        return LpSolution("unbounded", p.lb.copy(), np.zeros(0), np.inf)
    x = np.where(p.c > 0, p.ub, p.lb)
    return LpSolution("optimal", x, np.zeros(0), float(p.c @ x + p.offset),
                      Basis(np.zeros(0, np.int64), p.c > 0, np.zeros(0)), p.c.copy())


def _as_column(coeffs, m: int) -> sp.csc_matrix:
    if isinstance(coeffs, Mapping):
        rows = np.fromiter(coeffs.keys(), dtype=np.int64, count=len(coeffs))
        vals = np.fromiter(coeffs.values(), dtype=float, count=len(coeffs))
        if len(rows) and (rows.min() < 0 or rows.max() >= m):
            raise ValueError("column row index out of range")
        return sp.csc_matrix((vals, (rows, np.zeros(len(rows), np.int64))), shape=(m, 1))
    if sp.issparse(coeffs):
        col = sp.csc_matrix(coeffs).reshape(-1, 1) if coeffs.shape[0] != m else sp.csc_matrix(coeffs)
    else:
        col = np.asarray(coeffs, dtype=float).reshape(-1, 1)
    if col.shape != (m, 1):
        raise ValueError(f"column has {col.shape[0]} entries, program has {m} constraints")
    return sp.csc_matrix(col)


def add_columns(p: LinearProgram, columns: Sequence[tuple[float, object]], *,
                ub: Sequence[float] | None = None, names: Sequence[str] | None = None) -> LinearProgram:
    """Append columns ``(cost, coefficients)``; coefficients dense or ``{row: value}``."""
    if not columns:
        return p
    cols = [_as_column(coef, p.m) for _, coef in columns]
    A = sp.hstack([p.A] + cols, format="csc")
    c = np.concatenate([p.c, [float(cost) for cost, _ in columns]])
    lb = np.concatenate([p.lb, np.zeros(len(columns))])
    new_ub = np.full(len(columns), np.inf) if ub is None else np.asarray(ub, dtype=float)
    col_names = None
    if p.col_names is not None:
        col_names = list(p.col_names) + (list(names) if names else [f"x{p.n + i}" for i in range(len(columns))])
    return LinearProgram(c, A, p.b, lb, np.concatenate([p.ub, new_ub]), p.offset, col_names, p.row_names)


def add_column(p: LinearProgram, solution: LpSolution | None, new_column: tuple[float, object]) -> tuple[LinearProgram, Basis | None]:
    """Extend ``p`` by one column; the previous optimal basis stays valid for a warm re-solve."""
    return add_columns(p, [new_column]), (solution.basis if solution is not None else None)


def to_lp_text(p: LinearProgram, integer_vars: Sequence[int] = ()) -> str:
    """Human-readable LP-format listing for cross-checking with external solvers."""
    cn = p.col_names or [f"x{j}" for j in range(p.n)]
    rn = p.row_names or [f"c{i}" for i in range(p.m)]

    def term(v: float, name: str, first: bool) -> str:
        sign = "-" if v < 0 else ("" if first else "+")
        mag = abs(v)
        coef = "" if mag == 1 else f"{mag:.12g} "
        return f"{sign} {coef}{name}".strip() if first else f"{sign} {coef}{name}"

    lines = ["Maximize"]
    obj = [term(v, cn[j], i == 0) for i, (j, v) in enumerate((j, v) for j, v in enumerate(p.c) if v != 0)]
    lines.append(" obj: " + (" ".join(obj) if obj else "0"))
    if p.offset:
        lines[-1] += f" + {p.offset:.12g} constant"
    lines.append("Subject To")
    csr = p.A.tocsr()
    for i in range(p.m):
        s, e = csr.indptr[i], csr.indptr[i + 1]
        terms = [term(v, cn[j], k == 0) for k, (j, v) in enumerate(zip(csr.indices[s:e], csr.data[s:e]))]
        lines.append(f" {rn[i]}: {' '.join(terms) if terms else '0'} = {p.b[i]:.12g}")
    lines.append("Bounds")
    for j in range(p.n):
        hi = "+inf" if not np.isfinite(p.ub[j]) else f"{p.ub[j]:.12g}"
        lines.append(f" {p.lb[j]:.12g} <= {cn[j]} <= {hi}")
    if len(integer_vars):
        lines.append("Generals")
        lines.append(" " + " ".join(cn[j] for j in integer_vars))
    lines.append("End")
    return "\n".join(lines) + "\n"
