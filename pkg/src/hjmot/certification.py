"""Independent checks of the structural properties of a computed path coupling.

Each check returns a :class:`CheckResult` whose ``slack`` is the worst signed
excess (a check passes when the excess stays within tolerance) and whose
``witness`` reproduces that slack when re-evaluated.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .model import SKIP, SUPPORT_EPS, ProblemInstance, endpoint_weights
from .paths import all_paths, count_paths, path_cost, path_costs, path_to_json, random_paths, tilde_matrix
from .solver import HJMOTSolution, atoms_value, pair_projection, pushforward, solve_hjmot, stage_marginals
from .transport import InfeasibleError, TransportPlan, solve_exact_transport

EXHAUSTIVE_LIMIT = 20_000
RANDOM_PATHS = 100_000
PERMUTATION_CAP = 200_000
SAMPLED_PERMUTATIONS = 10_000
MARGINAL_TOL = 1e-9
GLUE_DUST = 1e-15


@dataclass
class CheckResult:
    name: str
    passed: bool
    slack: float
    witness: object = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "pass": bool(self.passed), "slack": _jsonable(self.slack),
                "witness": _jsonable(self.witness), "details": _jsonable(self.details)}


@dataclass
class CertificateReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        return check

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"pass": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    return x


class GluingError(ValueError):
    def __init__(self, stage: int, discrepancy: float):
        self.stage, self.discrepancy = stage, discrepancy
        super().__init__(f"pairwise plans disagree on the stage-{stage} marginal by {discrepancy:.3g}")


class NonMongeError(ValueError):
    def __init__(self, stage: int, point: int, paths: list):
        self.stage, self.point, self.paths = stage, point, paths
        super().__init__(f"point {point} of stage {stage} continues differently on support paths "
                         f"{[path_to_json(p) for p in paths]}")


# ---------------------------------------------------------------- marginals

def check_marginals(instance: ProblemInstance, solution: HJMOTSolution, tol: float = MARGINAL_TOL) -> CheckResult:
    """Endpoint pushforwards match the instance measures and the total mass is one."""
    mu0, muK = endpoint_weights(instance)
    atoms = solution.path_atoms
    worst, witness = 0.0, None
    for k, target in ((0, mu0), (instance.K, muK)):
        diff = pushforward(instance, atoms, k) - target
        i = int(np.argmax(np.abs(diff)))
        if abs(diff[i]) > worst:
            worst, witness = float(abs(diff[i])), {"stage": k, "index": i, "difference": float(diff[i])}
    neg = [m for _, m in atoms if m < 0]
    total = math.fsum(m for _, m in atoms)
    details = {"total_mass": total, "negative_atoms": len(neg)}
    passed = worst <= tol and abs(total - 1.0) <= tol and not neg
    return CheckResult("marginals", passed, worst, witness, details)


def check_objective(instance: ProblemInstance, solution: HJMOTSolution, tol: float = MARGINAL_TOL) -> CheckResult:
    """The reported objective equals the integral of the path cost against the atoms."""
    value = atoms_value(instance, solution.path_atoms)
    gap = abs(value - solution.M)
    ok = gap <= tol * max(1.0, abs(value)) if math.isfinite(value) else value == solution.M
    return CheckResult("objective", bool(ok), gap, {"reported": solution.M, "recomputed": value})


# ---------------------------------------------------------------- duality

@dataclass
class SplittingPotentials:
    v: list  # v[k] over the augmented index set of stage k

    def evaluate(self, instance: ProblemInstance, paths) -> np.ndarray:
        P = np.asarray(paths, dtype=np.int64).reshape(-1, instance.K + 1)
        total = np.zeros(P.shape[0])
        for k in range(instance.K + 1):
            slots = np.where(P[:, k] == SKIP, instance.spaces[k].size, P[:, k])
            total = total + self.v[k][slots]
        return total


def splitting_potentials(instance: ProblemInstance, solution: HJMOTSolution) -> SplittingPotentials:
    """Endpoint duals of the reduced transport, zero on every intermediate state."""
    if solution.duals is None:
        raise ValueError("splitting potentials need transport duals; solve with method='exact'")
    u, v = solution.duals
    vs = [np.asarray(u, dtype=float)]
    vs += [np.zeros(instance.augmented_size(k)) for k in range(1, instance.K)]
    vs.append(np.asarray(v, dtype=float))
    return SplittingPotentials(vs)


def dual_value(instance: ProblemInstance, potentials: SplittingPotentials, solution: HJMOTSolution) -> float:
    """Sum over stages of the integral of v_k against the solution's stage marginal."""
    total = 0.0
    for k, m in enumerate(stage_marginals(instance, solution.path_atoms)):
        total += float(np.dot(potentials.v[k], m))
    return total


def check_splitting(instance: ProblemInstance, potentials: SplittingPotentials, solution: HJMOTSolution,
                    tol: float = 1e-9, seed: int = 0) -> CheckResult:
    """Global inequality sum_k v_k <= c on paths, equality on support, and zero duality gap."""
    support = [p for p, _ in solution.path_atoms]
    n_paths = count_paths(instance)
    if n_paths <= EXHAUSTIVE_LIMIT:
        P = all_paths(instance)
        mode = "exhaustive"
    else:
        P = random_paths(instance, RANDOM_PATHS, np.random.default_rng(seed))
        if support:
            P = np.vstack([P, np.asarray(support, dtype=np.int64)])
        mode = "sampled"
    c = path_costs(instance, P)
    s = potentials.evaluate(instance, P)
    with np.errstate(invalid="ignore"):
        excess = np.where(np.isfinite(c), s - c, -np.inf)
        scaled = excess / np.maximum(1.0, np.abs(np.where(np.isfinite(c), c, 1.0)))
    i = int(np.argmax(scaled))
    ineq_slack = float(excess[i])
    ineq_ok = bool(scaled[i] <= tol)
    ineq_witness = tuple(int(x) for x in P[i])

    sup_slack, sup_witness, sup_ok = 0.0, None, True
    if support:
        cs = path_costs(instance, support)
        ss = potentials.evaluate(instance, support)
        gaps = np.abs(ss - cs)
        j = int(np.argmax(gaps / np.maximum(1.0, np.abs(cs))))
        sup_slack = float(gaps[j])
        sup_ok = bool(gaps[j] <= tol * max(1.0, abs(cs[j])))
        sup_witness = support[j]

    dv = dual_value(instance, potentials, solution)
    duality_gap = abs(dv - solution.M)
    dual_ok = duality_gap <= tol * max(1.0, abs(solution.M))
    if not ineq_ok:
        slack, witness = ineq_slack, ineq_witness
    elif not sup_ok:
        slack, witness = sup_slack, sup_witness
    else:
        slack, witness = max(ineq_slack, sup_slack), ineq_witness
    details = {"mode": mode, "inequality_pass": ineq_ok, "inequality_slack": ineq_slack,
               "inequality_witness": path_to_json(ineq_witness),
               "support_pass": sup_ok, "support_slack": sup_slack,
               "dual_value": dv, "duality_gap": duality_gap, "duality_pass": dual_ok}
    witness_json = None if witness is None else path_to_json(witness)
    return CheckResult("splitting", ineq_ok and sup_ok and dual_ok, slack, witness_json, details)


# ---------------------------------------------------------------- cyclical monotonicity

def _permutation_tuples(m: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """Permutation tuples for stages 1..K (stage 0 fixed to the identity), shape (T, K, m).

    Fixing stage 0 loses nothing: applying one permutation to every stage only
    reorders the m permuted paths and leaves their total cost unchanged.
    """
    perms = np.array(list(itertools.permutations(range(m))), dtype=np.int64)
    total = len(perms) ** K
    if total <= PERMUTATION_CAP:
        idx = np.array(list(itertools.product(range(len(perms)), repeat=K)), dtype=np.int64).reshape(-1, K)
    else:
        idx = rng.integers(0, len(perms), size=(SAMPLED_PERMUTATIONS, K))
    return perms[idx]


def check_cyclical_monotonicity(instance: ProblemInstance, solution: HJMOTSolution, m_max: int = 3,
                                samples: int = 200, tol: float = 1e-9, seed: int = 0) -> CheckResult:
    """For sampled support subsets, no stage-wise rearrangement lowers the total cost."""
    if m_max > 4:
        raise ValueError("m_max must be at most 4")
    support = np.asarray([p for p, _ in solution.path_atoms], dtype=np.int64).reshape(-1, instance.K + 1)
    n = support.shape[0]
    top = min(m_max, n)
    if top < 2:
        return CheckResult("cyclical", True, 0.0, None, {"subsets": 0, "reason": "fewer than two support atoms"})
    rng = np.random.default_rng(seed)
    K = instance.K
    cache = {m: _permutation_tuples(m, K, rng) for m in range(2, top + 1)}
    worst, witness, tested = -math.inf, None, 0
    for s in range(samples):
        m = 2 + s % (top - 1)
        pick = np.sort(rng.choice(n, size=m, replace=False))
        sub = support[pick]
        base = float(path_costs(instance, sub).sum())
        tuples = cache[m]
        T = tuples.shape[0]
        rows = np.empty((T, m, K + 1), dtype=np.int64)
        rows[:, :, 0] = sub[:, 0][None, :]
        for k in range(1, K + 1):
            rows[:, :, k] = sub[:, k][tuples[:, k - 1]]
        costs = path_costs(instance, rows.reshape(-1, K + 1)).reshape(T, m).sum(axis=1)
        excess = base - costs
        j = int(np.argmax(excess))
        tested += T
        if excess[j] > worst:
            sigma = np.vstack([np.arange(m)[None, :], tuples[j]])
            worst = float(excess[j])
            witness = {"paths": [path_to_json(p) for p in sub], "permutations": sigma.tolist(),
                       "permuted": [path_to_json(p) for p in rows[j]],
                       "original_cost": base, "permuted_cost": float(costs[j])}
    passed = worst <= tol * max(1.0, abs(witness["original_cost"]))
    return CheckResult("cyclical", bool(passed), worst, witness,
                       {"subsets": samples, "tuples_evaluated": tested, "m_max": top})


# ---------------------------------------------------------------- gluing

def _dense(plan) -> np.ndarray:
    return plan.dense() if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)


def glue_pairwise(plans, marginals, tol: float = MARGINAL_TOL) -> dict:
    """Compose pairwise couplings of consecutive stages into one path measure.

    ``plans[i]`` couples stages ``i`` and ``i+1`` on augmented index sets and
    ``marginals[k]`` is the stage-k weight vector.  The result maps tuples of
    augmented slots to positive masses (atoms at or below 1e-15 dropped).
    """
    plans = [_dense(p) for p in plans]
    marginals = [np.asarray(m, dtype=float) for m in marginals]
    if len(marginals) != len(plans) + 1:
        raise ValueError(f"{len(plans)} plans need {len(plans) + 1} marginals, got {len(marginals)}")
    for i, P in enumerate(plans):
        for stage, got in ((i, P.sum(axis=1)), (i + 1, P.sum(axis=0))):
            want = marginals[stage]
            if got.shape != want.shape:
                raise GluingError(stage, math.inf)
            gap = float(np.abs(got - want).max())
            if gap > tol:
                raise GluingError(stage, gap)
    measure = {(int(a), int(b)): float(P) for (a, b), P in np.ndenumerate(plans[0]) if P > 0}
    for i in range(1, len(plans)):
        mu, P = marginals[i], plans[i]
        kernels = {}
        for a in range(P.shape[0]):
            if mu[a] > 0:
                row = P[a] / mu[a]
                kernels[a] = [(int(b), float(row[b])) for b in np.flatnonzero(row > 0)]
            else:
                kernels[a] = [(0, 1.0)]  # arbitrary but fixed continuation for null states
        nxt = {}
        for path, mass in measure.items():
            for b, k in kernels[path[-1]]:
                nxt[path + (b,)] = nxt.get(path + (b,), 0.0) + mass * k
        measure = nxt
    return {p: m for p, m in measure.items() if m > GLUE_DUST}


def glued_marginal(glued: dict, stage: int, size: int) -> np.ndarray:
    out = np.zeros(size)
    for path, mass in glued.items():
        out[path[stage]] += mass
    return out


def glued_projection(glued: dict, i: int, shape: tuple) -> np.ndarray:
    out = np.zeros(shape)
    for path, mass in glued.items():
        out[path[i], path[i + 1]] += mass
    return out


def check_glued_marginals(glued: dict, plans, marginals, tol: float = 1e-12) -> CheckResult:
    plans = [_dense(p) for p in plans]
    worst, witness = 0.0, None
    for k, m in enumerate(marginals):
        m = np.asarray(m, dtype=float)
        diff = np.abs(glued_marginal(glued, k, m.size) - m)
        if diff.max() > worst:
            worst, witness = float(diff.max()), {"stage": k, "index": int(np.argmax(diff))}
    for i, P in enumerate(plans):
        diff = np.abs(glued_projection(glued, i, P.shape) - P)
        if diff.max() > worst:
            a, b = np.unravel_index(int(np.argmax(diff)), P.shape)
            worst, witness = float(diff.max()), {"pair": [i, i + 1], "index": [int(a), int(b)]}
    return CheckResult("glue", worst <= tol, worst, witness, {"atoms": len(glued)})


def slots_to_path(instance: ProblemInstance, slots) -> tuple:
    return tuple(instance.choice_from_slot(k, s) for k, s in enumerate(slots))


def check_glue_solution(instance: ProblemInstance, solution: HJMOTSolution, tol: float = 1e-12) -> CheckResult:
    """Glue the solution's own consecutive-pair projections and re-verify them."""
    atoms = solution.path_atoms
    plans = [pair_projection(instance, atoms, i) for i in range(instance.K)]
    marginals = stage_marginals(instance, atoms)
    glued = glue_pairwise(plans, marginals)
    res = check_glued_marginals(glued, plans, marginals, tol)
    value = 0.0
    for slots, mass in glued.items():
        value += mass * path_cost(slots_to_path(instance, slots), instance)
    res.details["glued_value"] = value
    res.details["value_at_least_M"] = bool(value >= solution.M - 1e-9 * max(1.0, abs(solution.M)))
    res.passed = res.passed and res.details["value_at_least_M"]
    return res


# ---------------------------------------------------------------- upper bound

@dataclass
class TildeBound:
    bound: float
    M: float
    holds: bool
    parts: list


def upper_bound_via_tilde(instance: ProblemInstance, intermediate_measures, M: float | None = None) -> TildeBound:
    """Sum over consecutive stages of the optimal transport cost for the maximum adjacent cost."""
    K = instance.K
    if len(intermediate_measures) != K - 1:
        raise ValueError(f"need {K - 1} intermediate measures, got {len(intermediate_measures)}")
    mu0, muK = endpoint_weights(instance)
    measures = [mu0] + [np.asarray(getattr(m, "weights", m), dtype=float) for m in intermediate_measures] + [muK]
    for k in range(1, K):
        w = measures[k]
        if w.size != instance.augmented_size(k):
            raise ValueError(f"stage {k} measure has {w.size} weights, expected {instance.augmented_size(k)}")
        if not instance.allow_skips and w[-1] != 0:
            raise ValueError(f"stage {k} measure puts mass on the skip state but skips are disabled")
    if M is None:
        M = solve_hjmot(instance).M
    parts = []
    for i in range(K):
        try:
            parts.append(solve_exact_transport(measures[i], measures[i + 1], tilde_matrix(instance, i)).value)
        except InfeasibleError:
            parts.append(math.inf)
    bound = math.fsum(parts) if all(math.isfinite(p) for p in parts) else math.inf
    holds = math.isinf(bound) or M <= bound + 1e-9 * max(1.0, abs(bound))
    return TildeBound(bound, float(M), bool(holds), parts)


def check_tilde_bound(instance: ProblemInstance, solution: HJMOTSolution) -> CheckResult:
    tb = upper_bound_via_tilde(instance, solution.intermediate_marginals, solution.M)
    return CheckResult("tilde-bound", tb.holds, tb.M - tb.bound if math.isfinite(tb.bound) else -math.inf,
                       None, {"bound": tb.bound, "M": tb.M, "parts": tb.parts})


# ---------------------------------------------------------------- decomposition

@dataclass
class Decomposition:
    sum: float
    M: float
    gap: float
    parts: list
    matrices: list = field(repr=False, default_factory=list)


def _next_active(path, i: int) -> int:
    for k in range(i + 1, len(path)):
        if path[k] != SKIP:
            return k
    raise AssertionError("terminal stage is never skipped")


def continuation_map(instance: ProblemInstance, solution: HJMOTSolution) -> list:
    """Per stage, the jump taken by each point that is followed by a skip on the support.

    Entry ``i`` maps a point ``x`` of stage ``i`` to ``(k, y)``: the next
    visited stage and its point on the support path that leaves ``x`` through
    the skip state of stage ``i + 1``.  Raises :class:`NonMongeError` when a
    source carries more than one support path, or when two support paths
    leave the same point through a skip but land on different targets (the
    jump cost would be ambiguous).
    """
    conts = [dict() for _ in range(instance.K)]
    owners = [dict() for _ in range(instance.K)]
    sources = {}
    for path, mass in solution.path_atoms:
        if mass < SUPPORT_EPS:
            continue
        if path[0] in sources:
            raise NonMongeError(0, path[0], [sources[path[0]], path])
        sources[path[0]] = path
        for i in range(instance.K - 1):
            x = path[i]
            if x == SKIP or path[i + 1] != SKIP:
                continue
            k = _next_active(path, i)
            nxt = (k, path[k])
            prev = conts[i].setdefault(x, nxt)
            if prev != nxt:
                raise NonMongeError(i, x, [owners[i][x], path])
            owners[i].setdefault(x, path)
    return conts


def minimal_cost_matrices(instance: ProblemInstance, solution: HJMOTSolution, exclude: str = "transitions") -> list:
    """Minimal-cost matrices over consecutive augmented stages built from the support.

    Both points: the direct cost.  A point followed by skip: the cost of the
    jump to the next visited stage on the support path through that point.
    Skip followed by anything: zero.  Entries outside the realized support are
    excluded (+inf): with ``exclude="transitions"`` only pairs that carry
    mass in the solution's consecutive-pair projection stay finite; with
    ``exclude="states"`` every pair of realized states stays finite.
    """
    if exclude not in ("transitions", "states"):
        raise ValueError("exclude must be 'transitions' or 'states'")
    conts = continuation_map(instance, solution)
    atoms = solution.path_atoms
    out = []
    for i in range(instance.K):
        ni, nj = instance.spaces[i].size, instance.spaces[i + 1].size
        C = np.zeros((instance.augmented_size(i), instance.augmented_size(i + 1)))
        C[:ni, :nj] = instance.cost(i, i + 1)
        if C.shape[1] > nj:
            for x in range(ni):
                if x in conts[i]:
                    k, y = conts[i][x]
                    C[x, nj] = instance.cost(i, k)[x, y]
                else:
                    C[x, nj] = math.inf
        if exclude == "transitions":
            realized = pair_projection(instance, atoms, i) >= SUPPORT_EPS
        else:
            rows = pushforward(instance, atoms, i) >= SUPPORT_EPS
            cols = pushforward(instance, atoms, i + 1) >= SUPPORT_EPS
            realized = rows[:, None] & cols[None, :]
        C[~realized] = math.inf
        out.append(C)
    return out


def decomposition_check(instance: ProblemInstance, solution: HJMOTSolution,
                        exclude: str = "transitions") -> Decomposition:
    """Sum of consecutive-stage minimal-cost transports between the solution's marginals, against M."""
    mats = minimal_cost_matrices(instance, solution, exclude)
    marg = stage_marginals(instance, solution.path_atoms)
    parts = []
    for i, C in enumerate(mats):
        mu, nu = marg[i], marg[i + 1]
        parts.append(solve_exact_transport(mu / mu.sum(), nu / nu.sum(), C).value)
    total = math.fsum(parts)
    return Decomposition(total, solution.M, abs(total - solution.M), parts, mats)


def check_decomposition(instance: ProblemInstance, solution: HJMOTSolution, tol: float = 1e-9,
                        exclude: str = "transitions") -> CheckResult:
    try:
        d = decomposition_check(instance, solution, exclude)
    except NonMongeError as exc:
        return CheckResult("decomposition", False, math.inf,
                           {"stage": exc.stage, "point": exc.point, "paths": [path_to_json(p) for p in exc.paths]},
                           {"status": "monge-precondition-failed"})
    ok = d.gap <= tol * max(1.0, abs(d.M))
    return CheckResult("decomposition", bool(ok), d.gap, None,
                       {"status": "ok" if ok else "gap", "sum": d.sum, "M": d.M, "parts": d.parts})


# ---------------------------------------------------------------- aggregate

ALL_CHECKS = ("splitting", "cyclical", "glue", "tilde-bound", "decomposition", "twist")


def certify(instance: ProblemInstance, solution: HJMOTSolution, checks=ALL_CHECKS, tol: float = 1e-9,
            seed: int = 0) -> CertificateReport:
    """Run the marginal and objective checks plus every requested structural check."""
    from .monge import check_discrete_twist

    unknown = set(checks) - set(ALL_CHECKS)
    if unknown:
        raise ValueError(f"unknown checks {sorted(unknown)}; choose from {', '.join(ALL_CHECKS)}")
    report = CertificateReport()
    report.add(check_marginals(instance, solution, tol))
    report.add(check_objective(instance, solution, tol))
    for name in checks:
        if name == "splitting":
            if solution.duals is None:
                report.add(CheckResult("splitting", False, math.inf, None,
                                       {"status": "no duals; solve with the exact method"}))
            else:
                pots = splitting_potentials(instance, solution)
                report.add(check_splitting(instance, pots, solution, tol, seed))
        elif name == "cyclical":
            report.add(check_cyclical_monotonicity(instance, solution, 3, 200, tol, seed))
        elif name == "glue":
            report.add(check_glue_solution(instance, solution, max(tol, 1e-12)))
        elif name == "tilde-bound":
            report.add(check_tilde_bound(instance, solution))
        elif name == "decomposition":
            report.add(check_decomposition(instance, solution, tol))
        elif name == "twist":
            tw = check_discrete_twist(instance)
            report.add(CheckResult("twist", tw.passed, float(max(tw.cardinality.values(), default=1) - 1),
                                   tw.witness, {"cardinality": tw.cardinality}))
    return report
