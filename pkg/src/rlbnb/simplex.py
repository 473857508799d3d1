"""Bounded-variable primal simplex for node LP relaxations.

The solver works on the instance rows plus per-node bound overrides. Rows are
converted to equalities with one slack column each (bounded by sense), so the
working system is A_full @ [x; s] = b with box bounds on every column.

Phase 1 reuses the same pivoting loop with piecewise-linear infeasibility
costs on out-of-bounds basic variables (no artificial columns), which lets a
warm basis from a parent node start the solve directly even when it is primal
infeasible for the child. Its ratio test takes the long step: it crosses
breakpoints while the directional derivative of the total violation stays
negative, fixing several violated bounds per pivot. Dantzig pricing with a
switch to Bland's rule after a stall; the leaving variable ties break to the
lowest column index. The pivot loop itself is jitted (_simplex_core).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _simplex_core as core
from .milp import MilpInstance, SENSE_GE, SENSE_LE

FEAS_TOL = 1e-7
INT_TOL = 1e-6
PIVOT_TOL = 1e-9
DUAL_TOL = 1e-9
DEFAULT_PIVOT_LIMIT = 50_000

_REFRESH_EVERY = 128   # pivots between dense refactorisations
_STALL_LIMIT = 150     # non-improving pivots before switching to Bland's rule

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"

# column status codes (shared with the jitted kernel)
BASIC, AT_LOWER, AT_UPPER, FREE = core.BASIC, core.AT_LOWER, core.AT_UPPER, core.FREE


class SimplexError(RuntimeError):
    """Numerical breakdown (singular basis or vanishing pivot) or unbounded LP."""


@dataclass
class LocalBounds:
    """Per-node bound overrides on top of the instance bounds."""

    overrides: dict[int, tuple[float, float]] = field(default_factory=dict)

    def tightened(self, var: int, lower: float | None = None,
                  upper: float | None = None) -> "LocalBounds":
        lo, hi = self.overrides.get(var, (-math.inf, math.inf))
        if lower is not None:
            lo = max(lo, lower)
        if upper is not None:
            hi = min(hi, upper)
        new = dict(self.overrides)
        new[var] = (lo, hi)
        return LocalBounds(new)

    def apply(self, lb: np.ndarray, ub: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lo = lb.copy()
        hi = ub.copy()
        for j, (l, u) in self.overrides.items():
            lo[j] = max(lo[j], l)
            hi[j] = min(hi[j], u)
        return lo, hi


@dataclass
class LpResult:
    status: str
    objective: float
    x: np.ndarray
    iterations: int
    fractional_set: list[int]
    basis: np.ndarray | None = None
    col_status: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None


@dataclass
class WarmStart:
    """Opaque basis hint; invalid hints are ignored by solve_lp."""

    basis: np.ndarray
    col_status: np.ndarray


def warm_hint(parent_result: LpResult) -> WarmStart | None:
    if parent_result.status != OPTIMAL or parent_result.basis is None:
        return None
    return WarmStart(parent_result.basis.copy(), parent_result.col_status.copy())


def _standard_form(inst: MilpInstance):
    """Dense A plus Fortran-ordered [A | I], rhs, and slack bounds (cached)."""
    cached = getattr(inst, "_simplex_std", None)
    if cached is not None:
        return cached
    m = inst.num_cons
    a = np.ascontiguousarray(inst.dense_matrix())
    afull = np.asfortranarray(np.concatenate([a, np.eye(m)], axis=1))
    b = np.array([row.rhs for row in inst.rows])
    s_lo = np.empty(m)
    s_hi = np.empty(m)
    for i, row in enumerate(inst.rows):
        if row.sense == SENSE_LE:
            s_lo[i], s_hi[i] = 0.0, math.inf
        elif row.sense == SENSE_GE:
            s_lo[i], s_hi[i] = -math.inf, 0.0
        else:
            s_lo[i], s_hi[i] = 0.0, 0.0
    inst._simplex_std = (a, afull, b, s_lo, s_hi)
    return inst._simplex_std


def _fractional_set(x: np.ndarray, is_integer: np.ndarray) -> list[int]:
    frac = np.abs(x - np.round(x))
    return [int(j) for j in np.flatnonzero(is_integer & (frac > INT_TOL))]


def solve_lp(inst: MilpInstance, bounds: LocalBounds | None = None,
             pivot_limit: int = DEFAULT_PIVOT_LIMIT,
             warm: WarmStart | None = None) -> LpResult:
    """Solve the LP relaxation of the instance under the given bound overrides."""
    n, m = inst.num_vars, inst.num_cons
    a, afull, b, s_lo, s_hi = _standard_form(inst)
    if bounds is None:
        lb2, ub2 = inst.lb, inst.ub
    else:
        lb2, ub2 = bounds.apply(inst.lb, inst.ub)
    lo = np.concatenate([lb2, s_lo])
    hi = np.concatenate([ub2, s_hi])
    if (lo > hi + FEAS_TOL).any():
        return LpResult(INFEASIBLE, math.inf, np.zeros(n), 0, [])

    ncols = n + m
    c = np.concatenate([inst.objective, np.zeros(m)])
    lo_fin = np.isfinite(lo)
    hi_fin = np.isfinite(hi)

    # --- starting basis: warm hint if usable, otherwise the slack basis
    basis = None
    if warm is not None and len(warm.col_status) == ncols and len(warm.basis) == m:
        cand = np.asarray(warm.basis, dtype=np.int64)
        if len(np.unique(cand)) == m and cand.min() >= 0 and cand.max() < ncols:
            try:
                binv = np.ascontiguousarray(np.linalg.inv(afull[:, cand]))
            except np.linalg.LinAlgError:
                binv = None
            if binv is not None and np.isfinite(binv).all():
                basis = cand.copy()
                cstat = np.asarray(warm.col_status, dtype=np.int8).copy()
                cstat[basis] = BASIC
    if basis is None:
        cstat = np.full(ncols, FREE, dtype=np.int8)
        cstat[lo_fin] = AT_LOWER
        cstat[~lo_fin & hi_fin] = AT_UPPER
        basis = np.arange(n, ncols, dtype=np.int64)
        cstat[basis] = BASIC
        binv = np.eye(m)

    # repair stray BASIC marks and nonbasic columns resting on an infinite bound
    stray = (cstat == BASIC).copy()
    stray[basis] = False
    cstat[stray] = AT_LOWER
    nonb = cstat != BASIC
    bad_lo = nonb & (cstat == AT_LOWER) & ~lo_fin
    cstat[bad_lo & hi_fin] = AT_UPPER
    cstat[bad_lo & ~hi_fin] = FREE
    bad_hi = nonb & (cstat == AT_UPPER) & ~hi_fin
    cstat[bad_hi & lo_fin] = AT_LOWER
    cstat[bad_hi & ~lo_fin] = FREE

    x = np.zeros(ncols)
    x[cstat == AT_LOWER] = lo[cstat == AT_LOWER]
    x[cstat == AT_UPPER] = hi[cstat == AT_UPPER]
    core._recompute_basics(a, b, x, basis, binv, n)

    try:
        code, iters = core.run_pivots(
            a, afull, b, c, lo, hi, basis, cstat, x, binv,
            pivot_limit, FEAS_TOL, PIVOT_TOL, DUAL_TOL,
            _STALL_LIMIT, _REFRESH_EVERY)
    except np.linalg.LinAlgError as exc:
        raise SimplexError("singular basis during refactorisation") from exc

    if code == core.STATUS_OPTIMAL:
        xs = np.clip(x[:n].copy(), lb2, ub2)
        y = c[basis] @ binv
        return LpResult(
            status=OPTIMAL,
            objective=float(inst.objective @ xs),
            x=xs,
            iterations=iters,
            fractional_set=_fractional_set(xs, inst.is_integer),
            basis=basis.copy(),
            col_status=cstat.copy(),
            duals=y.copy(),
            reduced_costs=(inst.objective - y @ a),
        )
    if code == core.STATUS_INFEASIBLE:
        return LpResult(INFEASIBLE, math.inf, np.zeros(n), iters, [])
    if code == core.STATUS_LIMIT:
        return LpResult(ITERATION_LIMIT, float(c[:n] @ x[:n]), x[:n].copy(), iters, [])
    raise SimplexError("pivot element below tolerance or no usable breakpoint")
