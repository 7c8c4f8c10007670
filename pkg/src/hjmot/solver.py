"""Jump-problem solver: reduce to a two-marginal cost, transport, lift back to paths."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import SUPPORT_EPS, DiscreteMeasure, ProblemInstance, check_valid, endpoint_weights
from .paths import path_cost
from .reduction import DEFAULT_TIE_TOL, ReducedCostTable, reduced_cost_table
from .transport import InfeasibleError, TransportPlan, solve_entropic, solve_exact_transport

log = logging.getLogger(__name__)

DRIFT_TOL = 1e-12


@dataclass
class HJMOTSolution:
    path_atoms: list  # [(path, mass)] sorted by path
    M: float
    intermediate_marginals: list  # DiscreteMeasure on augmented stages 1..K-1, skip slot last
    method: str = "exact"
    duals: tuple | None = None  # (u over X_0, v over X_K) from the reduced transport
    table: ReducedCostTable | None = field(default=None, repr=False)
    plan: TransportPlan | None = field(default=None, repr=False)

    @property
    def paths(self) -> list:
        return [p for p, _ in self.path_atoms]

    @property
    def masses(self) -> np.ndarray:
        return np.array([m for _, m in self.path_atoms])

    def skipped_mass(self) -> list:
        """Mass on the skip state of each intermediate stage."""
        return [float(m.weights[-1]) for m in self.intermediate_marginals]


def pushforward(instance: ProblemInstance, atoms, k: int) -> np.ndarray:
    """Stage-``k`` marginal of a path measure on the augmented index set."""
    out = np.zeros(instance.augmented_size(k))
    for path, mass in atoms:
        out[instance.slot(k, path[k])] += mass
    return out


def pair_projection(instance: ProblemInstance, atoms, i: int) -> np.ndarray:
    """Joint law of stages ``(i, i+1)`` on augmented index sets."""
    out = np.zeros((instance.augmented_size(i), instance.augmented_size(i + 1)))
    for path, mass in atoms:
        out[instance.slot(i, path[i]), instance.slot(i + 1, path[i + 1])] += mass
    return out


def stage_marginals(instance: ProblemInstance, atoms) -> list:
    return [pushforward(instance, atoms, k) for k in range(instance.K + 1)]


def atoms_value(instance: ProblemInstance, atoms) -> float:
    total = 0.0
    for path, mass in atoms:
        total += mass * path_cost(path, instance)
    return total


def lift_plan(instance: ProblemInstance, table: ReducedCostTable, plan: TransportPlan) -> list:
    """Replace every transport entry by its argmin path; merge, drop dust, renormalize on drift."""
    merged = {}
    for a, b, mass in plan.entries:
        path = table.argmin_paths[a][b]
        if path is None:
            raise InfeasibleError(f"transport used the unreachable pair ({a}, {b})")
        merged[path] = merged.get(path, 0.0) + mass
    atoms = sorted((p, m) for p, m in merged.items() if m >= SUPPORT_EPS)
    total = math.fsum(m for _, m in atoms)
    if abs(total - 1.0) > DRIFT_TOL:
        atoms = [(p, m / total) for p, m in atoms]
    return atoms


def build_solution(instance: ProblemInstance, atoms, M: float, method: str = "exact",
                   duals=None, table=None, plan=None) -> HJMOTSolution:
    inter = [DiscreteMeasure(k, pushforward(instance, atoms, k)) for k in range(1, instance.K)]
    return HJMOTSolution(atoms, float(M), inter, method, duals, table, plan)


def solve_hjmot(instance: ProblemInstance, method: str = "exact", epsilon: float = 1e-2,
                max_iter: int = 10_000, stop_tol: float = 1e-9,
                tie_tol: float = DEFAULT_TIE_TOL) -> HJMOTSolution:
    """Optimal path coupling of the jump problem.

    ``method`` is ``"exact"`` (min-cost flow, duals kept) or ``"entropic"``
    (Sinkhorn at ``epsilon``; no duals).  Raises :class:`InfeasibleError`
    when no finite-cost coupling exists.
    """
    check_valid(instance)
    table = reduced_cost_table(instance, tie_tol)
    mu0, muK = endpoint_weights(instance)
    src, dst = mu0 >= SUPPORT_EPS, muK >= SUPPORT_EPS
    if not np.isfinite(table.values[np.ix_(src, dst)]).any():
        raise InfeasibleError("no source/terminal pair in the supports is joined by a finite-cost path")
    if method == "exact":
        plan = solve_exact_transport(mu0, muK, table.values)
        duals = (plan.u, plan.v)
        value = plan.value
    elif method == "entropic":
        plan, value, _ = solve_entropic(mu0, muK, table.values, epsilon, max_iter, stop_tol)
        duals = None
    else:
        raise ValueError(f"unknown method {method!r}")
    atoms = lift_plan(instance, table, plan)
    log.info("solved K=%d sizes=%s: M=%.12g with %d atoms", instance.K, instance.sizes, value, len(atoms))
    return build_solution(instance, atoms, value, method, duals, table, plan)
