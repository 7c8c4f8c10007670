"""Full path-space linear program, solved by a dense bounded-variable primal simplex.

This is an oracle for the reduction-based solver and deliberately shares no
code with :mod:`hjmot.transport`: the variables are the masses of every
finite-cost path, the constraints are the two endpoint marginals and total
mass one.  Entering and leaving variables follow Bland's smallest-index rule,
which rules out cycling on the highly degenerate transport polytope.
"""

from __future__ import annotations

import math

import numpy as np

from .model import ProblemInstance, endpoint_weights
from .paths import all_paths, path_costs

LP_SIZE_LIMIT = 20_000
PRICE_TOL = 1e-11
PIVOT_TOL = 1e-9
FEASIBILITY_TOL = 1e-9


class LPInfeasibleError(ValueError):
    pass


def _simplex(A, b, c, upper, basis, at_upper, max_iter=100_000):
    """Bounded-variable primal simplex from a feasible basis; updates ``basis``/``at_upper`` in place."""
    m, n = A.shape
    for _ in range(max_iter):
        Binv = np.linalg.inv(A[:, basis])
        fixed = at_upper.copy()
        fixed[basis] = False
        xB = Binv @ (b - A[:, fixed] @ upper[fixed])
        d = c - (c[basis] @ Binv) @ A
        nonbasic = np.ones(n, dtype=bool)
        nonbasic[basis] = False
        improving = nonbasic & (((~at_upper) & (d < -PRICE_TOL)) | (at_upper & (d > PRICE_TOL)))
        cand = np.flatnonzero(improving)
        if cand.size == 0:
            return xB
        j = int(cand[0])
        direction = -1.0 if at_upper[j] else 1.0
        rate = -direction * (Binv @ A[:, j])
        best_t, leave, leave_upper = upper[j], -1, False
        for i in np.argsort(basis, kind="stable"):
            if rate[i] < -PIVOT_TOL:
                t, to_upper = max(xB[i], 0.0) / -rate[i], False
            elif rate[i] > PIVOT_TOL and math.isfinite(upper[basis[i]]):
                t, to_upper = max(upper[basis[i]] - xB[i], 0.0) / rate[i], True
            else:
                continue
            # strict comparison keeps the smallest basic index among ties
            if t < best_t - 1e-14 or (leave == -1 and t < best_t):
                best_t, leave, leave_upper = t, int(i), to_upper
        if not math.isfinite(best_t):
            raise RuntimeError("linear program is unbounded")
        if leave == -1:
            at_upper[j] = not at_upper[j]
            continue
        out = basis[leave]
        at_upper[out] = leave_upper
        basis[leave] = j
        at_upper[j] = False
    raise RuntimeError("simplex iteration limit reached")


def _full_solution(A, b, upper, basis, at_upper, xB):
    x = np.where(at_upper, upper, 0.0)
    x[basis] = xB
    return x


def solve_lp(A, b, c, upper):
    """Two-phase solve of ``min c.x`` s.t. ``A x = b``, ``0 <= x <= upper`` with ``b >= 0``.

    Returns the optimal ``x``; redundant equality rows found after phase one
    are dropped.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    up1 = np.concatenate([np.asarray(upper, dtype=float), np.full(m, math.inf)])
    basis = list(range(n, n + m))
    at_upper = np.zeros(n + m, dtype=bool)
    xB = _simplex(A1, b, c1, up1, basis, at_upper)
    x = _full_solution(A1, b, up1, basis, at_upper, xB)
    if x[n:].sum() > FEASIBILITY_TOL:
        raise LPInfeasibleError(f"phase one left infeasibility {x[n:].sum():.3g}")

    # pivot zero-level artificials out of the basis; rows where that is impossible are redundant
    keep_rows = list(range(m))
    i = 0
    while i < len(basis):
        if basis[i] < n:
            i += 1
            continue
        Binv = np.linalg.inv(A1[np.ix_(keep_rows, basis)])
        row = Binv[i] @ A1[keep_rows, :n]
        free = [j for j in range(n) if j not in basis and abs(row[j]) > PIVOT_TOL]
        if free:
            basis[i] = free[0]
            at_upper[free[0]] = False
            i += 1
        else:
            keep_rows.pop(i)
            basis.pop(i)
    A2, b2 = A[keep_rows], b[keep_rows]
    at2 = at_upper[:n].copy()
    xB = _simplex(A2, b2, np.asarray(c, dtype=float), np.asarray(upper, dtype=float), basis, at2)
    return _full_solution(A2, b2, np.asarray(upper, dtype=float), basis, at2, xB)


def solve_full_lp_oracle(instance: ProblemInstance) -> tuple:
    """Optimal value and optimal path measure of the full path-space LP.

    The measure is a dense array of shape ``(|X^_0|, ..., |X^_K|)`` indexed by
    augmented slots (see :meth:`ProblemInstance.slot`).
    """
    aug = [instance.augmented_size(k) for k in range(instance.K + 1)]
    size = math.prod(aug)
    if size > LP_SIZE_LIMIT:
        raise ValueError(f"instance too large for the LP oracle ({size} > {LP_SIZE_LIMIT})")
    P = all_paths(instance)
    cost = path_costs(instance, P)
    ok = np.isfinite(cost)
    P, cost = P[ok], cost[ok]
    mu0, muK = endpoint_weights(instance)
    n0, nK = mu0.size, muK.size
    A = np.zeros((n0 + nK + 1, len(P)))
    A[P[:, 0], np.arange(len(P))] = 1.0
    A[n0 + P[:, -1], np.arange(len(P))] = 1.0
    A[-1] = 1.0
    b = np.concatenate([mu0, muK, [1.0]])
    if len(P) == 0:
        raise LPInfeasibleError("no finite-cost path")
    x = solve_lp(A, b, cost, np.ones(len(P)))
    value = 0.0
    for j in np.flatnonzero(x > 0):
        value += x[j] * cost[j]
    measure = np.zeros(aug)
    for j in np.flatnonzero(x > 0):
        idx = tuple(instance.slot(k, int(P[j, k])) for k in range(instance.K + 1))
        measure[idx] += x[j]
    return float(value), measure
