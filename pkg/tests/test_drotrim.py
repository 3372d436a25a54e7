import json
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trimdro import drotrim
from trimdro.baselines import WeightedConditionalSample, knn_saa_solve, knn_weights, saa_solve
from trimdro.drotrim import (DroProblem, JointModel, solve, solve_sp1_discrete, solve_sp2_discrete,
                             worst_case_distribution, worst_case_value)
from trimdro.errors import DimensionMismatch, InfeasibleBudget, UnsupportedCase
from trimdro.gen import NewsvendorMixture, sample_newsvendor
from trimdro.loss import DecisionSet, PiecewiseBiAffineLoss, newsvendor_loss
from trimdro.sample import (ConditioningEvent, EmpiricalSample, TrimmedAmbiguitySpec,
                            event_distances, minimum_transport_budget)

from instances import random_problem
from oracles import greedy_cap_fill

# f(xi) = y, decision-independent
F_Y = PiecewiseBiAffineLoss(np.zeros((1, 2, 1)), [[0.0, 1.0]], [[0.0]], [0.0])
NO_X = DecisionSet.box([0.0], [0.0])
Z0 = ConditioningEvent.singleton([0.0], 1)
# Frozen from the 0.01-grid transport oracle in test_two_point_example_grid_oracle.
TWO_POINT_VALUE = 2.5


def test_single_interior_point_is_dirac():
    s = EmpiricalSample([[0.0, 3.0]], 1, 1)
    L = newsvendor_loss(1.0, 10.0)
    P = DroProblem.build(s, Z0, L, DecisionSet.box([1.0], [1.0]), 1.0, rho=0.0)
    assert worst_case_value(P, [1.0]) == pytest.approx(L.evaluate([1.0], [0.0, 3.0]), abs=1e-9)


def test_two_point_example_grid_oracle():
    s = EmpiricalSample([[0.0, 0.0], [2.0, 5.0]], 1, 1)
    P = DroProblem.build(s, Z0, F_Y, NO_X, 1.0, rho=1.0)
    grid = np.c_[np.zeros(801), np.round(np.arange(-100, 701) * 0.01, 10)]
    oracle = solve_sp2_discrete(s, grid, 1.0, 1.0, F_Y, [0.0], Z0)
    assert oracle == pytest.approx(TWO_POINT_VALUE, abs=1e-9)
    assert solve(P).J_hat == pytest.approx(TWO_POINT_VALUE, abs=1e-7)


def test_robust_value_dominates_knn_saa():
    spec = NewsvendorMixture()
    s = sample_newsvendor(spec, 10, 3, "dro-vs-knn")
    ev, L, D = spec.conditional_event(), newsvendor_loss(1, 10), DecisionSet.free(1)
    K = 4
    sol = solve(DroProblem.build(s, ev, L, D, K / 10, excess=0.3))
    _, v_knn = knn_saa_solve(s, ev, K, L, D)
    assert sol.J_hat >= v_knn - 1e-9


def test_zero_excess_collapses_to_knn_saa():
    spec = NewsvendorMixture()
    s = sample_newsvendor(spec, 40, 1, "collapse")
    ev, L, D = spec.conditional_event(), newsvendor_loss(1, 10), DecisionSet.free(1)
    K = 9
    x_dro = solve(DroProblem.build(s, ev, L, D, K / 40, excess=0.0)).x_hat
    x_knn, _ = saa_solve(knn_weights(s, ev, K), L, D)
    assert np.array_equal(x_dro, x_knn)


def test_unrobust_whole_space_recovers_saa():
    g = np.random.default_rng(2)
    s = EmpiricalSample(g.normal(size=(25, 1)), 0, 1)
    L, D = newsvendor_loss(1, 10, d_z=0), DecisionSet.free(1)
    x = solve(DroProblem.build(s, ConditioningEvent.whole_space(1, 0), L, D, 1.0, rho=0.0)).x_hat
    x_saa, _ = saa_solve(WeightedConditionalSample(s.points, np.full(25, 1 / 25)), L, D)
    assert x == pytest.approx(x_saa, abs=1e-9)


def test_worst_case_single_atom_is_projection():
    s = EmpiricalSample([[2.0, 1.5]], 1, 1)
    P = DroProblem.build(s, Z0, F_Y, NO_X, 1.0, rho=2.0)
    wc = worst_case_distribution(P, [0.0])
    _, proj = event_distances(s, Z0)
    assert wc.weights.sum() == pytest.approx(1.0)
    for p in wc.points:
        assert p == pytest.approx(proj[0], abs=1e-9)


def test_worst_case_trimming_cap_fill():
    g = np.random.default_rng(4)
    N, alpha = 8, 0.5
    s = EmpiricalSample(np.c_[np.zeros(N), g.normal(size=N)], 1, 1)
    P = DroProblem.build(s, Z0, F_Y, NO_X, alpha, rho=0.0)
    wc = worst_case_distribution(P, [0.0])
    want, w = greedy_cap_fill(s.y[:, 0], 1 / (N * alpha))
    assert wc.objective == pytest.approx(want, abs=1e-9)
    got = np.bincount(wc.source, weights=wc.weights, minlength=N)
    assert got == pytest.approx(w, abs=1e-9)
    assert not wc.violations(P)


def test_sp2_huge_budget_attains_grid_max():
    g = np.random.default_rng(5)
    s = EmpiricalSample(g.normal(size=(5, 2)), 1, 1)
    _, proj = event_distances(s, Z0)
    vals = F_Y.evaluate([0.0], proj)
    for alpha in (1.0, 0.4):
        assert solve_sp2_discrete(s, proj, alpha, 1e6, F_Y, [0.0], Z0) == pytest.approx(vals.max())


def test_sp2_matches_worst_case_when_grid_holds_atoms():
    g = np.random.default_rng(6)
    checked = 0
    while checked < 5:
        P = random_problem(g, 6, kind="singleton")
        x = g.uniform(-1, 1, P.loss.n)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            wc = worst_case_distribution(P, x)
        if wc.degenerate:  # supremum approached only in the limit: no finite grid attains it
            continue
        checked += 1
        _, proj = event_distances(P.sample, P.event)
        grid = np.vstack([wc.points, proj])
        v = solve_sp2_discrete(P.sample, grid, P.spec.alpha, P.spec.rho, P.loss, x)
        assert v == pytest.approx(wc.objective, abs=1e-6)


def test_sp2_nested_grids_increase_toward_joint_lp():
    g = np.random.default_rng(7)
    s = EmpiricalSample(g.normal(size=(4, 2)), 1, 1)
    L = PiecewiseBiAffineLoss(np.zeros((2, 2, 1)), [[0.0, 1.0], [0.0, -2.0]], [[0.0], [0.0]], [0.0, 0.5])
    alpha, rho = 0.7, minimum_transport_budget(s, Z0, 0.7) + 0.4
    target = worst_case_value(DroProblem.build(s, Z0, L, NO_X, alpha, rho=rho), [0.0])
    prev = -np.inf
    for step in (1.0, 0.5, 0.25, 0.125):
        ys = np.arange(-4, 4 + 1e-9, step)
        _, proj = event_distances(s, Z0)
        grid = np.vstack([np.c_[np.zeros(ys.size), ys], proj])
        v = solve_sp2_discrete(s, grid, alpha, rho, L, [0.0], Z0)
        assert v >= prev - 1e-9 and v <= target + 1e-7
        prev = v


def test_sp1_equals_sp2_at_alpha_one():
    g = np.random.default_rng(8)
    s = EmpiricalSample(g.normal(size=(4, 2)), 1, 1)
    _, proj = event_distances(s, Z0)
    grid = np.vstack([proj, np.c_[np.zeros(9), np.linspace(-3, 3, 9)]])
    rho = minimum_transport_budget(s, Z0, 1.0) + 0.5
    a = solve_sp2_discrete(s, grid, 1.0, rho, F_Y, [0.0], Z0)
    b = solve_sp1_discrete(s, grid, 1.0, rho, F_Y, [0.0], Z0)
    assert a == pytest.approx(b, abs=1e-7)


def test_contamination_mode_has_no_event_terms():
    g = np.random.default_rng(9)
    s = EmpiricalSample(g.normal(size=(10, 1)), 0, 1)
    ev = ConditioningEvent.whole_space(1, 0)
    dist, _ = event_distances(s, ev)
    assert np.all(dist == 0.0)
    assert minimum_transport_budget(s, ev, 0.6) == 0.0
    L = newsvendor_loss(1, 10, d_z=0)
    model = JointModel(s, ev, 0.6, L, DecisionSet.free(1))
    assert model.floor == 0.0 and model.ieta.size == 0
    # with no budget the value is the trimmed SAA: worst trimming of the empirical loss
    x = solve(DroProblem.build(s, ev, L, DecisionSet.free(1), 0.6, rho=0.0)).x_hat
    want, _ = greedy_cap_fill(L.evaluate(x, s.points), 1 / 6)
    assert worst_case_value(DroProblem.build(s, ev, L, DecisionSet.free(1), 0.6, rho=0.0), x) == \
        pytest.approx(want, abs=1e-9)


def test_errors():
    s = EmpiricalSample([[1.0, 0.0]], 1, 1)
    with pytest.raises(InfeasibleBudget):
        DroProblem.build(s, Z0, F_Y, NO_X, 1.0, rho=0.5)
    spec = TrimmedAmbiguitySpec(1.0, 5.0, 1.0, p=2.0)
    with pytest.raises(UnsupportedCase):
        DroProblem(s, Z0, spec, F_Y, NO_X)
    with pytest.raises(DimensionMismatch):
        DroProblem.build(s, Z0, newsvendor_loss(1, 1, d_z=0), DecisionSet.free(1), 1.0, rho=2.0)


def test_solution_serialises():
    g = np.random.default_rng(10)
    P = random_problem(g, 5)
    sol = solve(P)
    wc = worst_case_distribution(P, sol.x_hat)
    doc = json.loads(sol.to_json(wc))
    assert doc["J_hat"] == sol.J_hat and len(doc["worst_case"]) == wc.weights.size
    assert sol.dual_objective() == pytest.approx(sol.J_hat, abs=1e-7)


@given(st.integers(0, 10_000))
def test_duality_and_invariants(seed):
    g = np.random.default_rng(seed)
    P = random_problem(g, 8)
    sol = solve(P)
    for x in (sol.x_hat, g.uniform(-1, 1, P.loss.n)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            wc = worst_case_distribution(P, x)
        v = worst_case_value(P, x)
        assert wc.objective == pytest.approx(v, abs=1e-6 * (1 + abs(v)))
        if not wc.degenerate:
            assert wc.expectation(P.loss, x) == pytest.approx(v, abs=1e-6 * (1 + abs(v)))
        assert wc.violations(P) == []
    assert sol.J_hat <= worst_case_value(P, g.uniform(-1, 1, P.loss.n)) + 1e-7


@given(st.integers(0, 10_000))
def test_budget_monotonicity(seed):
    g = np.random.default_rng(seed)
    P = random_problem(g, 6)
    S, E, L, D = P.sample, P.event, P.loss, P.decisions
    a_hi = P.spec.alpha
    a_lo = a_hi * g.uniform(0.3, 1.0)
    rho = P.spec.rho
    v = lambda a, r: solve(DroProblem.build(S, E, L, D, a, rho=r)).J_hat
    assert v(a_hi, rho) <= v(a_hi, rho + 0.5) + 1e-7
    assert v(a_hi, rho) <= v(a_lo, rho) + 1e-7


@given(st.integers(0, 10_000))
def test_joint_lp_agrees_with_sp2_on_atom_grid(seed):
    g = np.random.default_rng(seed)
    P = random_problem(g, 8, kind=g.choice(["singleton", "box", "halfspace"]))
    x = g.uniform(-1, 1, P.loss.n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        wc = worst_case_distribution(P, x)
    if wc.degenerate:
        return
    _, proj = event_distances(P.sample, P.event)
    grid = np.vstack([wc.points, proj])
    sp2 = solve_sp2_discrete(P.sample, grid, P.spec.alpha, P.spec.rho, P.loss, x)
    assert sp2 == pytest.approx(worst_case_value(P, x), abs=1e-6)


def test_unattained_supremum_is_reported():
    # a far source with spare budget: the inner supremum is only approached by sending
    # vanishing mass arbitrarily far along the loss slope
    s = EmpiricalSample([[0.0, 0.0], [0.0, 1.0]], 1, 1)
    L = PiecewiseBiAffineLoss(np.zeros((2, 2, 1)), [[0.0, 0.0], [0.0, 1.0]], [[0.0], [0.0]], [5.0, 0.0])
    P = DroProblem.build(s, Z0, L, NO_X, 1.0, rho=1.0)
    with pytest.warns(drotrim.DegenerateAtom):
        wc = worst_case_distribution(P, [0.0])
    assert wc.degenerate
    assert wc.objective == pytest.approx(worst_case_value(P, [0.0]), abs=1e-7)
