import math

import numpy as np
import pytest
from hypothesis import given, settings

from hjmot.certification import (
    ALL_CHECKS,
    GluingError,
    NonMongeError,
    SplittingPotentials,
    certify,
    check_cyclical_monotonicity,
    check_decomposition,
    check_glue_solution,
    check_glued_marginals,
    check_marginals,
    check_objective,
    check_splitting,
    decomposition_check,
    dual_value,
    glue_pairwise,
    minimal_cost_matrices,
    splitting_potentials,
    upper_bound_via_tilde,
)
from hjmot.model import SKIP, explicit_instance
from hjmot.paths import path_cost, path_from_json
from hjmot.solver import build_solution, pair_projection, solve_hjmot, stage_marginals
from hjmot.transport import InfeasibleError

from conftest import instances, mix1, tiny1, tiny2


def solved(make):
    inst = make()
    return inst, solve_hjmot(inst)


# ---------------------------------------------------------------- splitting

def test_tiny1_potentials():
    inst, sol = solved(tiny1)
    pots = splitting_potentials(inst, sol)
    assert pots.v[0][0] + pots.v[2][0] == pytest.approx(0.52, abs=1e-15)
    assert pots.v[1].tolist() == [0.0, 0.0, 0.0]
    res = check_splitting(inst, pots, sol)
    assert res.passed
    assert res.details["support_slack"] <= 1e-12
    assert res.details["mode"] == "exhaustive"


def test_tiny2_and_mix1_potentials():
    inst, sol = solved(tiny2)
    pots = splitting_potentials(inst, sol)
    assert pots.evaluate(inst, [(0, SKIP, 0)])[0] == pytest.approx(1.0)
    inst, sol = solved(mix1)
    pots = splitting_potentials(inst, sol)
    assert dual_value(inst, pots, sol) == pytest.approx(0.76, abs=1e-12)
    assert check_splitting(inst, pots, sol).passed


def test_raised_potential_fails_on_support_atom():
    inst, sol = solved(tiny1)
    pots = splitting_potentials(inst, sol)
    bumped = SplittingPotentials([pots.v[0] + 0.1] + pots.v[1:])
    res = check_splitting(inst, bumped, sol)
    assert not res.passed
    assert path_from_json(res.witness) == (0, 0, 0)
    assert res.slack == pytest.approx(0.1)


def test_zero_potentials_fail_support_equality_only():
    inst, sol = solved(tiny1)
    zero = SplittingPotentials([np.zeros(inst.augmented_size(k)) for k in range(3)])
    res = check_splitting(inst, zero, sol)
    assert res.details["inequality_pass"]
    assert not res.details["support_pass"]
    assert res.details["support_slack"] == pytest.approx(0.52)
    assert not res.passed


def test_entropic_solution_has_no_potentials():
    inst = tiny1()
    sol = solve_hjmot(inst, method="entropic", epsilon=0.1)
    with pytest.raises(ValueError):
        splitting_potentials(inst, sol)
    assert not certify(inst, sol, ["splitting"])["splitting"].passed


@given(instances(max_K=4, max_size=3, forbid=0.1))
@settings(max_examples=60, deadline=None)
def test_exact_solutions_pass_splitting(inst):
    try:
        sol = solve_hjmot(inst)
    except InfeasibleError:
        return
    pots = splitting_potentials(inst, sol)
    res = check_splitting(inst, pots, sol)
    assert res.passed, res.details
    assert abs(dual_value(inst, pots, sol) - sol.M) <= 1e-9 * max(1.0, sol.M)


def test_witness_reevaluates_to_slack():
    inst, sol = solved(mix1)
    pots = splitting_potentials(inst, sol)
    bumped = SplittingPotentials([pots.v[0] + 0.25] + pots.v[1:])
    res = check_splitting(inst, bumped, sol)
    w = path_from_json(res.witness)
    assert bumped.evaluate(inst, [w])[0] - path_cost(w, inst) == pytest.approx(res.slack, abs=1e-15)


# ---------------------------------------------------------------- cyclical

def test_single_atom_passes_trivially():
    inst, sol = solved(tiny1)
    assert check_cyclical_monotonicity(inst, sol).passed


def test_mix1_eight_tuples():
    inst, sol = solved(mix1)
    res = check_cyclical_monotonicity(inst, sol, m_max=2, samples=1)
    assert res.passed
    # stage 0 fixed to the identity: 2^2 = 4 tuples cover all 2^3 = 8 up to relabeling
    assert res.details["tuples_evaluated"] == 4


def test_swapped_plan_fails_with_witness():
    inst = mix1()
    atoms = [((0, SKIP, 1), 0.5), ((1, SKIP, 0), 0.5)]
    fake = build_solution(inst, atoms, sum(m * path_cost(p, inst) for p, m in atoms))
    res = check_cyclical_monotonicity(inst, fake, m_max=2, samples=4)
    assert not res.passed
    w = res.witness
    permuted = [path_from_json(p) for p in w["permuted"]]
    assert sum(path_cost(p, inst) for p in permuted) == pytest.approx(w["permuted_cost"])
    assert w["permuted_cost"] < w["original_cost"]
    assert res.slack == pytest.approx(w["original_cost"] - w["permuted_cost"])


def test_m_max_limit():
    inst, sol = solved(mix1)
    with pytest.raises(ValueError):
        check_cyclical_monotonicity(inst, sol, m_max=5)


@given(instances(max_K=3, max_size=4, uniform=True))
@settings(max_examples=30, deadline=None)
def test_exact_solutions_are_cyclically_monotone(inst):
    sol = solve_hjmot(inst)
    assert check_cyclical_monotonicity(inst, sol, m_max=3, samples=50).passed


# ---------------------------------------------------------------- gluing

def test_glue_uniform_products():
    u = np.array([0.5, 0.5])
    plans = [np.outer(u, u), np.outer(u, u)]
    glued = glue_pairwise(plans, [u, u, u])
    assert len(glued) == 8
    assert all(m == pytest.approx(1 / 8) for m in glued.values())
    assert check_glued_marginals(glued, plans, [u, u, u]).passed


def test_glue_diagonals():
    u = np.array([0.5, 0.5])
    plans = [np.diag(u), np.diag(u)]
    glued = glue_pairwise(plans, [u, u, u])
    assert glued == {(0, 0, 0): 0.5, (1, 1, 1): 0.5}


def test_glue_mismatch_reports_stage():
    u, v = np.array([0.5, 0.5]), np.array([0.25, 0.75])
    with pytest.raises(GluingError) as err:
        glue_pairwise([np.outer(u, u), np.outer(v, u)], [u, u, u])
    assert err.value.stage == 1
    assert err.value.discrepancy == pytest.approx(0.25)


def test_glue_own_projections():
    inst, sol = solved(mix1)
    res = check_glue_solution(inst, sol)
    assert res.passed
    assert res.details["glued_value"] >= sol.M - 1e-12


def test_glue_of_random_consistent_families():
    rng = np.random.default_rng(8)
    for _ in range(20):
        K = int(rng.integers(1, 5))
        sizes = rng.integers(1, 5, K + 1)
        marg = [rng.dirichlet(np.ones(n)) for n in sizes]
        plans = []
        for i in range(K):
            P = np.outer(marg[i], marg[i + 1])
            # move mass along a random 2x2 cycle to leave the product
            if sizes[i] > 1 and sizes[i + 1] > 1:
                a, b = rng.choice(sizes[i], 2, replace=False), rng.choice(sizes[i + 1], 2, replace=False)
                d = 0.5 * min(P[a[0], b[1]], P[a[1], b[0]])
                P[a[0], b[0]] += d
                P[a[1], b[1]] += d
                P[a[0], b[1]] -= d
                P[a[1], b[0]] -= d
            plans.append(P)
        glued = glue_pairwise(plans, marg)
        assert check_glued_marginals(glued, plans, marg, 1e-12).passed


# ---------------------------------------------------------------- tilde bound

def test_tilde_examples():
    inst = tiny1()
    tb = upper_bound_via_tilde(inst, [np.array([1.0, 0.0, 0.0])], 0.52)
    assert tb.bound == pytest.approx(0.52) and tb.holds
    assert tb.parts == pytest.approx([0.16, 0.36])
    tb = upper_bound_via_tilde(inst, [np.array([0.0, 1.0, 0.0])], 0.52)
    assert tb.bound == pytest.approx(181.0) and tb.holds
    tb = upper_bound_via_tilde(tiny2(), [np.array([0.0, 1.0])], 1.0)
    assert tb.parts == [1.0, 0.0] and tb.holds


def test_tilde_defaults_M_to_solver_value():
    tb = upper_bound_via_tilde(tiny1(), [np.array([0.0, 0.0, 1.0])])
    assert tb.M == pytest.approx(0.52)
    assert tb.bound == 1.0


def test_tilde_infinite_part():
    mats = {(0, 1): np.array([[math.inf]]), (0, 2): np.array([[1.0]]), (1, 2): np.array([[0.0]])}
    inst = explicit_instance([1, 1, 1], mats)
    tb = upper_bound_via_tilde(inst, [np.array([1.0, 0.0])])
    assert tb.bound == math.inf and tb.holds


def test_tilde_rejects_wrong_lengths():
    with pytest.raises(ValueError):
        upper_bound_via_tilde(tiny1(), [np.array([1.0, 0.0])])


@given(instances(max_K=4, max_size=3, forbid=0.1))
@settings(max_examples=60, deadline=None)
def test_tilde_bound_holds_for_random_intermediates(inst):
    try:
        M = solve_hjmot(inst).M
    except InfeasibleError:
        return
    rng = np.random.default_rng(inst.K)
    meas = []
    for k in range(1, inst.K):
        w = rng.dirichlet(np.ones(inst.augmented_size(k)))
        if not inst.allow_skips:
            w[-1] = 0.0
            w /= w.sum()
        meas.append(w)
    assert upper_bound_via_tilde(inst, meas, M).holds


# ---------------------------------------------------------------- decomposition

@pytest.mark.parametrize("make, parts", [(tiny1, [0.16, 0.36]), (tiny2, [1.0, 0.0]), (mix1, [0.58, 0.18])])
def test_decomposition_examples(make, parts):
    inst, sol = solved(make)
    d = decomposition_check(inst, sol)
    assert d.parts == pytest.approx(parts, abs=1e-12)
    assert d.gap <= 1e-12
    assert check_decomposition(inst, sol).passed


def state_exclusion_counterexample():
    big = 100.0
    c01 = np.array([[0.0], [big]])
    c12 = np.array([[1.0, 0.0]])
    c02 = np.array([[big, big], [5.0, 0.0]])
    return explicit_instance([2, 1, 2], {(0, 1): c01, (1, 2): c12, (0, 2): c02},
                             [0.5, 0.5], [0.5, 0.5])


def test_transition_exclusion_needed():
    inst = state_exclusion_counterexample()
    sol = solve_hjmot(inst)
    assert sol.M == pytest.approx(0.5)
    assert sorted(sol.paths) == [(0, 0, 0), (1, SKIP, 1)]
    assert decomposition_check(inst, sol).gap <= 1e-12
    loose = decomposition_check(inst, sol, exclude="states")
    assert loose.sum == pytest.approx(0.0)


def test_minimal_cost_matrix_entries():
    inst, sol = solved(mix1)
    C01, C12 = minimal_cost_matrices(inst, sol)
    assert C01[0, 0] == pytest.approx(0.16)
    assert C01[1, 1] == pytest.approx(1.0)
    assert C01[0, 1] == math.inf and C01[1, 0] == math.inf
    assert C12[1, 1] == 0.0


def test_split_source_refused():
    inst = mix1()
    atoms = [((0, 0, 0), 0.25), ((0, SKIP, 1), 0.25), ((1, SKIP, 1), 0.25), ((1, 0, 0), 0.25)]
    fake = build_solution(inst, atoms, 1.0)
    with pytest.raises(NonMongeError) as err:
        decomposition_check(inst, fake)
    assert err.value.stage == 0
    res = check_decomposition(inst, fake)
    assert not res.passed and res.details["status"] == "monge-precondition-failed"


def test_bad_exclude_mode():
    inst, sol = solved(tiny1)
    with pytest.raises(ValueError):
        minimal_cost_matrices(inst, sol, exclude="nothing")


# ---------------------------------------------------------------- aggregate

def test_certify_all_on_fixtures():
    for make in (tiny1, tiny2, mix1):
        inst, sol = solved(make)
        report = certify(inst, sol)
        assert report.passed, report.to_dict()
        assert [c.name for c in report.checks] == ["marginals", "objective", *ALL_CHECKS]


def test_certify_detects_tampering():
    inst = mix1()
    atoms = [((0, SKIP, 1), 0.5), ((1, SKIP, 0), 0.5)]
    fake = build_solution(inst, atoms, 0.76)
    report = certify(inst, fake, ["cyclical"])
    assert not report["objective"].passed
    assert not report["cyclical"].passed


def test_marginal_check_catches_wrong_mass():
    inst = tiny1()
    fake = build_solution(inst, [((0, 0, 0), 0.9)], 0.468)
    res = check_marginals(inst, fake)
    assert not res.passed and res.slack == pytest.approx(0.1)
    assert check_objective(inst, fake).passed


def test_unknown_check_name():
    inst, sol = solved(tiny1)
    with pytest.raises(ValueError):
        certify(inst, sol, ["nope"])


def test_report_serializes():
    import json

    inst, sol = solved(mix1)
    json.dumps(certify(inst, sol).to_dict(), allow_nan=False)


def test_pair_projection_of_solution_matches_marginals():
    inst, sol = solved(mix1)
    marg = stage_marginals(inst, sol.path_atoms)
    for i in range(inst.K):
        P = pair_projection(inst, sol.path_atoms, i)
        assert np.allclose(P.sum(axis=1), marg[i]) and np.allclose(P.sum(axis=0), marg[i + 1])
