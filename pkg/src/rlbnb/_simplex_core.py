"""Jitted pivot loop for the bounded-variable simplex.

The kernel mutates (basis, cstat, x, binv) in place and returns a status code:
0 optimal, 1 infeasible, 2 iteration limit, 3 vanishing pivot. Column status
codes and the pivoting rules mirror the wrapper in simplex.py; see there for
the algorithm description.
"""

import numpy as np
from numba import njit

BASIC, AT_LOWER, AT_UPPER, FREE = 0, 1, 2, 3

STATUS_OPTIMAL = 0
STATUS_INFEASIBLE = 1
STATUS_LIMIT = 2
STATUS_PIVOT_FAIL = 3


@njit(cache=True)
def _recompute_basics(a, b, x, basis, binv, n):
    m = b.shape[0]
    xs = x[:n].copy()
    xk = x[n:].copy()
    for k in range(m):
        t = basis[k]
        if t < n:
            xs[t] = 0.0
        else:
            xk[t - n] = 0.0
    rhs = b - a @ xs - xk
    xb = binv @ rhs
    for k in range(m):
        x[basis[k]] = xb[k]


@njit(cache=True)
def _refactor(afull, a, b, x, basis, binv, n):
    bmat = np.empty((basis.shape[0], basis.shape[0]))
    for k in range(basis.shape[0]):
        bmat[:, k] = afull[:, basis[k]]
    fresh = np.linalg.inv(bmat)
    binv[:, :] = fresh
    _recompute_basics(a, b, x, basis, binv, n)


@njit(cache=True)
def run_pivots(a, afull, b, c, lo, hi, basis, cstat, x, binv,
               pivot_limit, feas_tol, pivot_tol, dual_tol,
               stall_limit, refresh_every):
    m, n = a.shape
    ncols = n + m

    iters = 0
    pivots_since = 0
    bland = False
    stall = 0
    last_obj = 0.0
    have_last = False
    last_phase = -1
    confirmed = False
    just_refactored = False

    cb = np.empty(m)
    rc = np.empty(ncols)
    deltas = np.empty(m)
    target = np.empty(m, np.int8)
    far_delta = np.empty(m)
    far_target = np.empty(m, np.int8)

    while True:
        # classify basic variables and build phase prices
        nviol = 0
        cur_obj = 0.0
        for k in range(m):
            v = x[basis[k]]
            l = lo[basis[k]]
            u = hi[basis[k]]
            if v < l - feas_tol:
                cb[k] = -1.0
                cur_obj += l - v
                nviol += 1
            elif v > u + feas_tol:
                cb[k] = 1.0
                cur_obj += v - u
                nviol += 1
            else:
                cb[k] = 0.0
        phase1 = nviol > 0
        if phase1:
            y = cb @ binv
            rc[:n] = -(y @ a)
            for i in range(m):
                rc[n + i] = -y[i]
        else:
            for k in range(m):
                cb[k] = c[basis[k]]
            y = cb @ binv
            rc[:n] = c[:n] - y @ a
            for i in range(m):
                rc[n + i] = -y[i]
            cur_obj = 0.0
            for j in range(n):
                cur_obj += c[j] * x[j]

        phase_id = 1 if phase1 else 2
        if phase_id != last_phase:
            have_last = False
            last_phase = phase_id
        if have_last and cur_obj < last_obj - 1e-12 * (1.0 + abs(last_obj)):
            stall = 0
            bland = False
        else:
            stall += 1
            if stall > stall_limit:
                bland = True
        last_obj = cur_obj
        have_last = True

        # entering column
        t = -1
        if bland:
            for j in range(ncols):
                s = cstat[j]
                if s == BASIC:
                    continue
                r = rc[j]
                if ((s == AT_LOWER or s == FREE) and r < -dual_tol) or \
                        ((s == AT_UPPER or s == FREE) and r > dual_tol):
                    t = j
                    break
        else:
            best = 0.0
            for j in range(ncols):
                s = cstat[j]
                if s == BASIC:
                    continue
                r = rc[j]
                if ((s == AT_LOWER or s == FREE) and r < -dual_tol) or \
                        ((s == AT_UPPER or s == FREE) and r > dual_tol):
                    mag = abs(r)
                    if mag > best:
                        best = mag
                        t = j

        if t < 0:
            if not confirmed:
                _refactor(afull, a, b, x, basis, binv, n)
                confirmed = True
                continue
            if phase1:
                return STATUS_INFEASIBLE, iters
            return STATUS_OPTIMAL, iters
        confirmed = False

        if iters >= pivot_limit:
            return STATUS_LIMIT, iters

        sigma = 1.0 if rc[t] < 0.0 else -1.0
        col_t = afull[:, t]
        w = binv @ np.ascontiguousarray(col_t)

        # breakpoints
        inf = np.inf
        for k in range(m):
            deltas[k] = inf
            target[k] = 0
            far_delta[k] = inf
            far_target[k] = 0
            gk = sigma * w[k]
            v = x[basis[k]]
            l = lo[basis[k]]
            u = hi[basis[k]]
            if v < l - feas_tol:
                if gk < -pivot_tol:
                    deltas[k] = (l - v) / (-gk)
                    target[k] = 1
                    if np.isfinite(u):
                        far_delta[k] = (u - v) / (-gk)
                        far_target[k] = 2
            elif v > u + feas_tol:
                if gk > pivot_tol:
                    deltas[k] = (v - u) / gk
                    target[k] = 2
                    if np.isfinite(l):
                        far_delta[k] = (v - l) / gk
                        far_target[k] = 1
            else:
                if gk > pivot_tol and np.isfinite(l):
                    deltas[k] = (v - l) / gk
                    target[k] = 1
                elif gk < -pivot_tol and np.isfinite(u):
                    deltas[k] = (u - v) / (-gk)
                    target[k] = 2
            if deltas[k] < 0.0:
                deltas[k] = 0.0

        d_own = inf
        if np.isfinite(hi[t]) and np.isfinite(lo[t]):
            d_own = hi[t] - lo[t]

        step = 0.0
        r = -1
        leave_to = 0
        if phase1:
            # long step over ordered breakpoint events (near + far)
            ev_delta = np.concatenate((deltas, far_delta))
            order = np.argsort(ev_delta, kind="mergesort")
            nev = 0
            for pos in range(2 * m):
                if np.isfinite(ev_delta[order[pos]]):
                    nev += 1
            slope = -abs(rc[t])
            blocking = -1
            flip = False
            if nev == 0:
                if not np.isfinite(d_own):
                    return STATUS_PIVOT_FAIL, iters
                flip = True
            else:
                for pos in range(nev):
                    ev = order[pos]
                    if np.isfinite(d_own) and d_own <= ev_delta[ev] - 1e-12:
                        flip = True
                        break
                    slope += abs(w[ev % m])
                    if slope >= -1e-12:
                        blocking = pos
                        break
                if not flip and blocking < 0:
                    # derivative never turned within the events
                    if np.isfinite(d_own):
                        flip = True
                    else:
                        blocking = nev - 1
            if flip:
                r = -1
                step = d_own
            else:
                d_star = ev_delta[order[blocking]]
                best_basis = ncols + 1
                pick = -1
                for pos in range(nev):
                    ev = order[pos]
                    if abs(ev_delta[ev] - d_star) <= 1e-9:
                        row = ev % m
                        if basis[row] < best_basis:
                            best_basis = basis[row]
                            pick = ev
                r = pick % m
                step = d_star
                leave_to = far_target[pick - m] if pick >= m else target[pick]
        else:
            d_row = inf
            for k in range(m):
                if deltas[k] < d_row:
                    d_row = deltas[k]
            if not np.isfinite(d_row) and not np.isfinite(d_own):
                return STATUS_PIVOT_FAIL, iters
            if d_own < d_row - 1e-12:
                r = -1
                step = d_own
            else:
                best_basis = ncols + 1
                for k in range(m):
                    if deltas[k] <= d_row + 1e-9 and basis[k] < best_basis:
                        best_basis = basis[k]
                        r = k
                step = d_row
                leave_to = target[r]

        if r < 0:
            # entering variable flips to its opposite bound
            for k in range(m):
                x[basis[k]] -= step * sigma * w[k]
            if cstat[t] == AT_LOWER:
                x[t] = hi[t]
                cstat[t] = AT_UPPER
            else:
                x[t] = lo[t]
                cstat[t] = AT_LOWER
            iters += 1
            continue

        piv = w[r]
        if abs(piv) < pivot_tol:
            if just_refactored:
                return STATUS_PIVOT_FAIL, iters
            _refactor(afull, a, b, x, basis, binv, n)
            pivots_since = 0
            just_refactored = True
            continue
        just_refactored = False

        leaving = basis[r]
        for k in range(m):
            x[basis[k]] -= step * sigma * w[k]
        x[t] = x[t] + sigma * step
        x[leaving] = lo[leaving] if leave_to == 1 else hi[leaving]
        cstat[leaving] = AT_LOWER if leave_to == 1 else AT_UPPER
        cstat[t] = BASIC

        inv_piv = 1.0 / piv
        for j in range(m):
            binv[r, j] *= inv_piv
        for k in range(m):
            if k != r:
                wk = w[k]
                if wk != 0.0:
                    for j in range(m):
                        binv[k, j] -= wk * binv[r, j]
        basis[r] = t

        iters += 1
        pivots_since += 1
        if pivots_since >= refresh_every:
            _refactor(afull, a, b, x, basis, binv, n)
            pivots_since = 0
