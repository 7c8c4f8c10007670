"""Path combinatorics: active indices, extraction, path cost, maximum adjacent cost.

Costs are always accumulated left to right starting from ``0.0`` so that the
scalar evaluator, the vectorized evaluator and the DAG recursion in
:mod:`hjmot.reduction` produce bit-identical sums for the same path.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .model import SKIP, ProblemInstance

REL_TOL = 1e-9
ABS_FLOOR = 1e-12


class ActiveIndices(NamedTuple):
    n: int
    indices: tuple


class ChainBound(NamedTuple):
    c_value: float
    tilde_sum: float
    holds: bool


def leq(a: float, b: float, rel: float = REL_TOL) -> bool:
    """``a <= b`` up to the package-wide relative tolerance with an absolute floor."""
    if math.isinf(b) and b > 0:
        return True
    return a <= b + max(rel * max(1.0, abs(b)), ABS_FLOOR)


def active_indices(path, K: int) -> ActiveIndices:
    idx = (0,) + tuple(k for k in range(1, K) if path[k] != SKIP) + (K,)
    return ActiveIndices(len(idx), idx)


def extract(path, instance: ProblemInstance) -> list:
    """(stage, point index) pairs visited by ``path``, in stage order."""
    return [(k, int(path[k])) for k in active_indices(path, instance.K).indices]


def check_path(path, instance: ProblemInstance) -> None:
    K = instance.K
    if len(path) != K + 1:
        raise ValueError(f"path has length {len(path)}, expected {K + 1}")
    for k, c in enumerate(path):
        if c == SKIP:
            if k in (0, K):
                raise ValueError(f"stage {k} cannot be skipped")
            if not instance.allow_skips:
                raise ValueError("skips are disabled for this instance")
        elif not 0 <= c < instance.spaces[k].size:
            raise ValueError(f"point index {c} out of range at stage {k}")


def path_cost(path, instance: ProblemInstance) -> float:
    acc = 0.0
    prev = 0
    for k in active_indices(path, instance.K).indices[1:]:
        acc += instance.cost(prev, k)[path[prev], path[k]]
        prev = k
    return float(acc)


def path_costs(instance: ProblemInstance, choices) -> np.ndarray:
    """Vectorized :func:`path_cost` over the rows of an ``(N, K+1)`` choice array."""
    P = np.asarray(choices, dtype=np.int64)
    K = instance.K
    N = P.shape[0]
    acc = np.zeros(N)
    last_stage = np.zeros(N, dtype=np.int64)
    last_pt = P[:, 0].copy()
    for k in range(1, K + 1):
        pk = P[:, k]
        active = pk != SKIP
        for i in range(k):
            sel = active & (last_stage == i)
            if sel.any():
                acc[sel] = acc[sel] + instance.cost(i, k)[last_pt[sel], pk[sel]]
        last_stage = np.where(active, k, last_stage)
        last_pt = np.where(active, pk, last_pt)
    return acc


def stage_choices(instance: ProblemInstance, k: int) -> list:
    pts = list(range(instance.spaces[k].size))
    if 0 < k < instance.K and instance.allow_skips:
        pts.append(SKIP)
    return pts


def count_paths(instance: ProblemInstance, source: int | None = None) -> int:
    total = 1
    for k in range(instance.K + 1):
        total *= 1 if (k == 0 and source is not None) else len(stage_choices(instance, k))
    return total


def all_paths(instance: ProblemInstance, source: int | None = None, terminal: int | None = None) -> np.ndarray:
    """Every path of the instance as an ``(N, K+1)`` array, lexicographic in stage order."""
    axes = [stage_choices(instance, k) for k in range(instance.K + 1)]
    if source is not None:
        axes[0] = [source]
    if terminal is not None:
        axes[-1] = [terminal]
    grids = np.meshgrid(*[np.asarray(a, dtype=np.int64) for a in axes], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def random_paths(instance: ProblemInstance, n: int, rng: np.random.Generator) -> np.ndarray:
    cols = []
    for k in range(instance.K + 1):
        opts = np.asarray(stage_choices(instance, k), dtype=np.int64)
        cols.append(opts[rng.integers(0, len(opts), size=n)])
    return np.stack(cols, axis=1)


def max_adjacent_cost(i: int, a: int, b: int, instance: ProblemInstance) -> float:
    """Maximum adjacent cost between augmented states ``a`` (stage i) and ``b`` (stage i+1)."""
    if a == SKIP:
        return 0.0
    if b != SKIP:
        return float(instance.cost(i, i + 1)[a, b])
    # sup over all later stages; stage K is never empty so the max exists
    return max(float(instance.cost(i, j)[a].max()) for j in range(i + 2, instance.K + 1))


def tilde_matrix(instance: ProblemInstance, i: int) -> np.ndarray:
    """Maximum adjacent cost on the augmented index sets of stages i and i+1."""
    K = instance.K
    ni, nj = instance.spaces[i].size, instance.spaces[i + 1].size
    out = np.zeros((instance.augmented_size(i), instance.augmented_size(i + 1)))
    out[:ni, :nj] = instance.cost(i, i + 1)
    if i + 1 < K:
        out[:ni, nj] = np.max([instance.cost(i, j).max(axis=1) for j in range(i + 2, K + 1)], axis=0)
    return out


def chain_bound(path, instance: ProblemInstance) -> ChainBound:
    c = path_cost(path, instance)
    tilde = 0.0
    for i in range(instance.K):
        tilde += max_adjacent_cost(i, path[i], path[i + 1], instance)
    return ChainBound(c, tilde, leq(c, tilde))


def skip_count(path) -> int:
    return sum(1 for c in path[1:-1] if c == SKIP)


def tie_key(path, K: int) -> tuple:
    """Deterministic order on equal-cost paths: fewer skips, earlier stages, lower indices."""
    act = active_indices(path, K).indices
    return (K + 1 - len(act), act, tuple(path[k] for k in act))


def path_to_json(path) -> list:
    return ["skip" if c == SKIP else int(c) for c in path]


def path_from_json(items) -> tuple:
    return tuple(SKIP if c == "skip" else int(c) for c in items)
