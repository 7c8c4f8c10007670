"""Reduction of the jump problem to a two-marginal cost by shortest paths in the layered DAG.

Nodes are ``(k, x)`` for every point ``x`` of stage ``k``; an edge ``(i, x) -> (j, y)``
exists for every ``i < j`` (only ``j = i + 1`` when skips are disabled) and
carries ``c_{i,j}(x, y)``.  Bypassing stages is taking a long edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import SKIP, ProblemInstance
from .paths import all_paths, count_paths, path_costs, tie_key

DEFAULT_TIE_TOL = 1e-9
EXACT_TIE_ABS = 1e-12
BRUTE_FORCE_LIMIT = 10**7
ENUMERATION_LIMIT = 10**5
MAX_TIES = 10_000


@dataclass
class ReducedCostTable:
    values: np.ndarray
    argmin_paths: list  # argmin_paths[a][b] is a path tuple or None when unreachable
    ties: np.ndarray
    tol: float = DEFAULT_TIE_TOL

    @property
    def shape(self):
        return self.values.shape


@dataclass
class OptimalContinuationSet:
    source: int
    paths: list
    costs: list
    h: float

    def __len__(self):
        return len(self.paths)


def successor_stages(instance: ProblemInstance, i: int) -> range:
    K = instance.K
    if i >= K:
        return range(0)
    return range(i + 1, K + 1) if instance.allow_skips else range(i + 1, i + 2)


def forward_costs(instance: ProblemInstance, source: int) -> list:
    """Cheapest cost from ``(0, source)`` to every node; entry ``k`` is a vector over stage k."""
    K = instance.K
    best = [None] * (K + 1)
    best[0] = np.full(instance.spaces[0].size, math.inf)
    best[0][source] = 0.0
    for j in range(1, K + 1):
        cur = np.full(instance.spaces[j].size, math.inf)
        for i in range(j):
            if j not in successor_stages(instance, i):
                continue
            reach = np.isfinite(best[i])
            if not reach.any():
                continue
            # same association as paths.path_cost: (prefix sum) + leg
            cand = (best[i][reach][:, None] + instance.cost(i, j)[reach]).min(axis=0)
            cur = np.minimum(cur, cand)
        best[j] = cur
    return best


def backward_costs(instance: ProblemInstance, terminal: int | None = None) -> list:
    """Cheapest completion from every node to ``(K, terminal)`` (to any terminal if None)."""
    K = instance.K
    g = [None] * (K + 1)
    if terminal is None:
        g[K] = np.zeros(instance.spaces[K].size)
    else:
        g[K] = np.full(instance.spaces[K].size, math.inf)
        g[K][terminal] = 0.0
    for i in range(K - 1, -1, -1):
        cur = np.full(instance.spaces[i].size, math.inf)
        for j in successor_stages(instance, i):
            cur = np.minimum(cur, (instance.cost(i, j) + g[j][None, :]).min(axis=1))
        g[i] = cur
    return g


def enumerate_near_optimal(instance: ProblemInstance, source: int, completion: list,
                           threshold: float, cap: int = MAX_TIES) -> tuple:
    """All paths from ``source`` whose left-to-right cost is ``<= threshold``.

    ``completion`` is a backward cost table (see :func:`backward_costs`) used for
    pruning; it also fixes the admissible terminals.  Returns ``(paths, costs,
    truncated)`` in depth-first order.
    """
    K = instance.K
    slack = threshold + 1e-9 * max(1.0, abs(threshold))
    found, costs = [], []
    path = [SKIP] * (K + 1)
    path[0] = source
    truncated = False

    def visit(i, x, acc):
        nonlocal truncated
        if len(found) >= cap:
            truncated = True
            return
        if i == K:
            if acc <= threshold:
                found.append(tuple(path))
                costs.append(float(acc))
            return
        for j in successor_stages(instance, i):
            row = instance.cost(i, j)[x]
            ok = np.flatnonzero(acc + row + completion[j] <= slack)
            for k in range(i + 1, j):
                path[k] = SKIP
            for y in ok:
                path[j] = int(y)
                visit(j, int(y), acc + row[y])
            for k in range(i + 1, j + 1):
                path[k] = SKIP

    visit(0, source, 0.0)
    return found, costs, truncated


def _exact_bound(value: float) -> float:
    return value + EXACT_TIE_ABS * max(1.0, abs(value))


def reduced_cost_table(instance: ProblemInstance, tol: float = DEFAULT_TIE_TOL) -> ReducedCostTable:
    n0, nK = instance.spaces[0].size, instance.spaces[-1].size
    values = np.full((n0, nK), math.inf)
    ties = np.zeros((n0, nK), dtype=np.int64)
    argmin = [[None] * nK for _ in range(n0)]
    backs = [backward_costs(instance, b) for b in range(nK)]
    for a in range(n0):
        values[a] = forward_costs(instance, a)[-1]
        for b in range(nK):
            v = values[a, b]
            if not math.isfinite(v):
                continue
            thr = v * (1.0 + tol) + EXACT_TIE_ABS
            paths, costs, _ = enumerate_near_optimal(instance, a, backs[b], thr)
            ties[a, b] = len(paths)
            exact = [p for p, c in zip(paths, costs) if c <= _exact_bound(v)]
            argmin[a][b] = min(exact, key=lambda p: tie_key(p, instance.K))
    return ReducedCostTable(values, argmin, ties, tol)


def brute_force_reduced_cost(instance: ProblemInstance, a: int, b: int) -> tuple:
    """Exhaustive minimum over every visited-stage subset and every intermediate choice."""
    size = int(np.prod([s + 1 for s in instance.sizes], dtype=object))
    if size > BRUTE_FORCE_LIMIT:
        raise ValueError(f"instance too large for brute force ({size} > {BRUTE_FORCE_LIMIT})")
    P = all_paths(instance, source=a, terminal=b)
    c = path_costs(instance, P)
    value = float(c.min())
    if not math.isfinite(value):
        return value, []
    keep = np.flatnonzero(c <= _exact_bound(value))
    return value, [tuple(int(v) for v in P[i]) for i in keep]


def h_values(instance: ProblemInstance, table: ReducedCostTable) -> np.ndarray:
    """Cheapest path cost out of each source over all terminals."""
    return table.values.min(axis=1)


def optimal_continuations(instance: ProblemInstance, a: int, tol: float = DEFAULT_TIE_TOL) -> OptimalContinuationSet:
    h = float(forward_costs(instance, a)[-1].min())
    if not math.isfinite(h):
        raise ValueError(f"source {a} has no finite-cost continuation")
    thr = h * (1.0 + tol) + EXACT_TIE_ABS
    if count_paths(instance, source=a) <= ENUMERATION_LIMIT:
        P = all_paths(instance, source=a)
        c = path_costs(instance, P)
        keep = np.flatnonzero(c <= thr)
        paths = [tuple(int(v) for v in P[i]) for i in keep]
        costs = [float(c[i]) for i in keep]
    else:
        paths, costs, _ = enumerate_near_optimal(instance, a, backward_costs(instance), thr)
    order = sorted(range(len(paths)), key=lambda i: tie_key(paths[i], instance.K))
    return OptimalContinuationSet(a, [paths[i] for i in order], [costs[i] for i in order], h)
