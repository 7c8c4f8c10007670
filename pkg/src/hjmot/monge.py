"""Deterministic (Monge) structure of solutions: discrete twist, map extraction, uniqueness probe."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import SUPPORT_EPS, ProblemInstance, endpoint_weights, realize_costs, with_matrices
from .paths import active_indices, path_to_json
from .reduction import DEFAULT_TIE_TOL, optimal_continuations
from .solver import HJMOTSolution, solve_hjmot


@dataclass
class TwistResult:
    passed: bool
    cardinality: dict  # source index -> number of optimal continuations
    witness: dict | None = None


def check_discrete_twist(instance: ProblemInstance, tol: float = DEFAULT_TIE_TOL) -> TwistResult:
    """Every charged source has exactly one optimal continuation."""
    mu0, _ = endpoint_weights(instance)
    card, witness = {}, None
    for a in np.flatnonzero(mu0 > 0):
        cont = optimal_continuations(instance, int(a), tol)
        card[int(a)] = len(cont)
        if len(cont) != 1 and witness is None:
            witness = {"source": int(a), "h": cont.h, "paths": [path_to_json(p) for p in cont.paths]}
    return TwistResult(witness is None, card, witness)


class MongeError(ValueError):
    def __init__(self, source: int, paths: list, masses: list):
        self.source, self.paths, self.masses = source, paths, masses
        listing = ", ".join(f"{path_to_json(p)}: {m:.6g}" for p, m in zip(paths, masses))
        super().__init__(f"source {source} splits its mass over several paths ({listing})")


@dataclass
class MongeMap:
    K: int
    paths: dict  # source index -> path
    masses: dict = field(default_factory=dict)  # source index -> mass carried

    def component(self, k: int) -> dict:
        """Stage-k component of the map: source -> point index or SKIP."""
        return {a: p[k] for a, p in self.paths.items()}

    def active(self, a: int) -> tuple:
        return active_indices(self.paths[a], self.K).indices

    def atoms(self) -> list:
        """Path measure obtained by pushing the source masses through the map."""
        return sorted((p, self.masses[a]) for a, p in self.paths.items())


def extract_monge_map(solution: HJMOTSolution, K: int | None = None) -> MongeMap:
    """Read the map ``source -> path`` off a solution whose sources are not split."""
    groups = {}
    for path, mass in solution.path_atoms:
        if mass < SUPPORT_EPS:
            continue
        groups.setdefault(path[0], []).append((path, mass))
    K = K if K is not None else (len(solution.path_atoms[0][0]) - 1 if solution.path_atoms else 1)
    out = MongeMap(K, {}, {})
    for a in sorted(groups):
        items = groups[a]
        if len(items) > 1:
            raise MongeError(a, [p for p, _ in items], [m for _, m in items])
        out.paths[a], out.masses[a] = items[0]
    return out


def support_set(solution: HJMOTSolution) -> frozenset:
    return frozenset(p for p, m in solution.path_atoms if m >= SUPPORT_EPS)


def perturb_costs(instance: ProblemInstance, jitter: float, rng: np.random.Generator) -> ProblemInstance:
    """Independent uniform noise in ``[-jitter, jitter]`` on every finite cost entry, clipped at zero."""
    mats = {}
    for key, C in sorted(realize_costs(instance).matrices.items()):
        noise = rng.uniform(-jitter, jitter, size=C.shape)
        mats[key] = np.where(np.isfinite(C), np.maximum(C + noise, 0.0), C)
    return with_matrices(instance, mats)


@dataclass
class UniquenessProbe:
    changed_fraction: float
    stability: float
    trials: int
    changed_trials: list


def uniqueness_probe(instance: ProblemInstance, jitter: float, trials: int = 20, seed: int = 0) -> UniquenessProbe:
    """Re-solve under small random cost perturbations and count support changes.

    ``stability`` is the fraction of trials whose optimal support equals the
    unperturbed one and ``changed_fraction`` is its complement.
    """
    if jitter < 0 or trials < 1:
        raise ValueError("jitter must be >= 0 and trials >= 1")
    base = support_set(solve_hjmot(instance))
    changed = []
    for t, child in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        if jitter == 0:
            continue
        inst = perturb_costs(instance, jitter, np.random.default_rng(child))
        if support_set(solve_hjmot(inst)) != base:
            changed.append(t)
    frac = len(changed) / trials
    return UniquenessProbe(frac, 1.0 - frac, trials, changed)


def pushforward_matches(monge_map: MongeMap, solution: HJMOTSolution) -> bool:
    """``(id, T)`` pushed through the source masses reproduces the solution atom for atom."""
    want = sorted((p, m) for p, m in solution.path_atoms if m >= SUPPORT_EPS)
    got = monge_map.atoms()
    return want == got
