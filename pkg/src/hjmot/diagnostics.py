"""Finite-difference diagnostics that move the source point off the grid.

Only the stage-0 location moves, along the straight line ``x0 + t v`` (or the
angle ``x0 + t v`` on the circle); every later point stays on the grid.  That
is what makes derivative-type conditions on the first variable testable on a
discrete instance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import SKIP, CostKind, ProblemInstance, circle_arc, kernel_from_point
from .paths import active_indices
from .reduction import backward_costs, optimal_continuations, successor_stages

DEFAULT_T_GRID = (1e-2, 1e-3, 1e-4, 1e-5)
RATIO_THRESHOLD = 0.9


def _require_kernel(instance: ProblemInstance) -> None:
    if not instance.costs.kind.is_kernel:
        raise ValueError("probe requires kernel costs (coordinates or angles on every stage)")


def source_location(instance: ProblemInstance, a: int) -> np.ndarray:
    s = instance.spaces[0]
    return np.array([s.angles[a]]) if instance.costs.kind is CostKind.SQUARED_CIRCLE else s.coords[a].copy()


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or (t <= 0).any():
        raise ValueError("t_grid must be a non-empty list of positive steps")
    if (np.diff(t) >= 0).any():
        raise ValueError("t_grid must be strictly decreasing")
    return t


def _direction(instance: ProblemInstance, a: int, v) -> tuple:
    x0 = source_location(instance, a)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != x0.shape:
        raise ValueError(f"direction has shape {v.shape}, expected {x0.shape}")
    return x0, v


def first_leg(instance: ProblemInstance, path, x) -> float:
    """Cost of the first jump of ``path`` when the source sits at location ``x``."""
    k = active_indices(path, instance.K).indices[1]
    return float(kernel_from_point(instance.costs.kind, x, instance.spaces[k])[path[k]])


def tail_cost(instance: ProblemInstance, path) -> float:
    """Cost of ``path`` after its first jump, accumulated from the terminal backwards.

    The association matches :func:`hjmot.reduction.backward_costs`, so an
    optimal tail reproduces the completion table bit for bit.
    """
    act = active_indices(path, instance.K).indices[1:]
    acc = 0.0
    for i, j in reversed(list(zip(act[:-1], act[1:]))):
        acc = instance.cost(i, j)[path[i], path[j]] + acc
    return acc


def richardson(t, q) -> float:
    """First-order extrapolation to ``t = 0`` from the two smallest steps."""
    if len(t) < 2:
        return float(q[-1])
    t1, t2, q1, q2 = t[-2], t[-1], q[-2], q[-1]
    return float((t1 * q2 - t2 * q1) / (t1 - t2))


def directional_derivative(instance: ProblemInstance, path, v, t_grid=DEFAULT_T_GRID) -> tuple:
    """Difference quotients ``[c(x0 + t v, tail) - c(path)] / t`` and their extrapolated limit.

    Only the first leg depends on the source location, so the numerator is
    evaluated as the change of that leg.  Returns ``(quotients, D)``.
    """
    _require_kernel(instance)
    t = _check_grid(t_grid)
    x0, v = _direction(instance, path[0], v)
    base = first_leg(instance, path, x0)
    q = np.array([(first_leg(instance, path, x0 + s * v) - base) / s for s in t])
    return q, richardson(t, q)


def distance_from_source(instance: ProblemInstance, x0, x) -> float:
    if instance.costs.kind is CostKind.SQUARED_CIRCLE:
        return float(circle_arc(float(x0[0]), float(x[0])))
    return float(np.linalg.norm(np.asarray(x) - np.asarray(x0)))


def sequence_quotient(instance: ProblemInstance, path, v, t_grid=DEFAULT_T_GRID) -> np.ndarray:
    """Quotients along ``x_n = x0 + t_n v`` normalized by the distance ``d(x_n, x0)``."""
    _require_kernel(instance)
    t = _check_grid(t_grid)
    x0, v = _direction(instance, path[0], v)
    base = first_leg(instance, path, x0)
    out = []
    for s in t:
        x = x0 + s * v
        d = distance_from_source(instance, x0, x)
        out.append((first_leg(instance, path, x) - base) / d if d > 0 else 0.0)
    return np.array(out)


def off_grid_h(instance: ProblemInstance, x, completion=None) -> float:
    """Cheapest continuation cost from an off-grid source location ``x``."""
    g = completion if completion is not None else backward_costs(instance)
    best = math.inf
    for j in successor_stages(instance, 0):
        legs = kernel_from_point(instance.costs.kind, x, instance.spaces[j])
        best = min(best, float((legs + g[j]).min()))
    return best


@dataclass
class LocalControlProbe:
    t: np.ndarray
    continuations: list
    r: np.ndarray  # shape (len(t), len(continuations))
    r_over_t: np.ndarray
    slopes: list
    passed: bool


def _branch_passes(ratios: np.ndarray) -> bool:
    if np.all(ratios == 0):
        return True
    with np.errstate(divide="ignore", invalid="ignore"):
        succ = np.abs(ratios[1:]) / np.abs(ratios[:-1])
    return bool(np.all(np.where(ratios[:-1] == 0, ratios[1:] == 0, succ < RATIO_THRESHOLD)))


def local_control_probe(instance: ProblemInstance, a: int, v, t_grid=DEFAULT_T_GRID) -> LocalControlProbe:
    """Remainders ``r(t) = c(x0 + t v, tail) - h(x0 + t v)`` for every optimal continuation of ``a``.

    A branch passes when ``r(t) / t`` is identically zero or shrinks by a
    factor below 0.9 from one step to the next.
    """
    _require_kernel(instance)
    t = _check_grid(t_grid)
    if t.size < 2:
        raise ValueError("insufficient grid: need at least two steps")
    cont = optimal_continuations(instance, a)
    if not cont.paths:
        raise ValueError(f"source {a} has no optimal continuation")
    x0, v = _direction(instance, a, v)
    g = backward_costs(instance)
    tails = [tail_cost(instance, p) for p in cont.paths]
    r = np.zeros((t.size, len(cont.paths)))
    for i, s in enumerate(t):
        x = x0 + s * v
        h = off_grid_h(instance, x, g)
        for j, p in enumerate(cont.paths):
            r[i, j] = (first_leg(instance, p, x) + tails[j]) - h
    ratios = r / t[:, None]
    slopes = [float(ratios[-1, j]) for j in range(len(cont.paths))]
    passed = all(_branch_passes(ratios[:, j]) for j in range(len(cont.paths)))
    return LocalControlProbe(t, cont.paths, r, ratios, slopes, passed)


@dataclass
class TwistProbe:
    derivatives: dict  # path -> extrapolated derivative
    injective: bool


def twist_probe(instance: ProblemInstance, a: int, v, tol: float = 1e-6, t_grid=DEFAULT_T_GRID) -> TwistProbe:
    """Directional derivatives of every optimal continuation; injective if pairwise distinct."""
    cont = optimal_continuations(instance, a)
    D = {p: directional_derivative(instance, p, v, t_grid)[1] for p in cont.paths}
    vals = list(D.values())
    injective = all(abs(vals[i] - vals[j]) > tol for i in range(len(vals)) for j in range(i + 1, len(vals)))
    return TwistProbe(D, injective)


def probe_rows(instance: ProblemInstance, a: int, v, t_grid=DEFAULT_T_GRID) -> list:
    """Flat table for CSV export: one row per step and optimal continuation."""
    t = _check_grid(t_grid)
    lc = local_control_probe(instance, a, v, t) if t.size >= 2 else None
    paths = lc.continuations if lc else optimal_continuations(instance, a).paths
    rows = []
    for j, p in enumerate(paths):
        q, D = directional_derivative(instance, p, v, t)
        for i, s in enumerate(t):
            rows.append({
                "t": float(s),
                "continuation": ["skip" if c == SKIP else int(c) for c in p],
                "quotient": float(q[i]),
                "r": float(lc.r[i, j]) if lc else math.nan,
                "r_over_t": float(lc.r_over_t[i, j]) if lc else math.nan,
                "D": D,
            })
    return rows
