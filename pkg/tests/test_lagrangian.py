"""Dual relaxation: decomposed minimizer, subgradient ascent, optimal heuristic."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speedup_search.ilp import Row, objective_of, solve_exact
from speedup_search.lagrangian import (
    DualState,
    dual_heuristic,
    dual_minimizer,
    dual_search_model,
    optimal_heuristic_features,
    solve_dual,
)
from speedup_search.search import FULL, PriorityConfig, beam_search
from tests.test_ilp import make_instance, random_instances


def forced_label_instance():
    # One variable, two labels; a >= row forces the expensive label 1.
    return make_instance(
        [(5.0, 1.0)],
        rows=(Row(((1, 1, 1.0),), 1.0, ">="),),
    )


def test_dual_minimizer_hand_computed():
    inst = forced_label_instance()
    # u = 2: reduced costs (5 - 2, 1); constant term b*u = 2.
    z, value = dual_minimizer(inst, np.array([2.0]))
    assert z.labels == {1: 2}
    assert value == 1.0 + 2.0
    # u = 6: reduced costs (-1, 1); theta(6) = -1 + 6 = 5 = primal.
    z, value = dual_minimizer(inst, np.array([6.0]))
    assert z.labels == {1: 1}
    assert value == 5.0


def test_dual_minimizer_ties_take_smallest_label():
    inst = make_instance([(1.0, 1.0)])
    z, _ = dual_minimizer(inst, np.zeros(0))
    assert z.labels == {1: 1}


def test_solve_dual_closes_gap_on_forced_label():
    inst = forced_label_instance()
    dual = solve_dual(inst)
    primal = solve_exact(inst.clone_fresh()).objective
    assert dual.dual_value <= primal + 1e-9
    assert abs(dual.dual_value - primal) < 1e-6
    assert dual.converged


def test_solve_dual_respects_sign_cones():
    rows = (
        Row(((1, 1, 1.0),), 0.0, "<="),
        Row(((1, 2, 1.0),), 1.0, ">="),
    )
    inst = make_instance([(0.0, 3.0)], rows)
    dual = solve_dual(inst)
    assert dual.u[0] <= 0.0
    assert dual.u[1] >= 0.0


def test_solve_dual_unconstrained_is_primal():
    inst = make_instance([(2.0, -1.0), (0.5, 3.0)])
    dual = solve_dual(inst)
    assert dual.dual_value == -0.5
    assert dual.converged and dual.iterations == 0


def test_optimal_heuristic_feature_decomposition():
    inst = forced_label_instance()
    dual = DualState(u=np.array([6.0]), dual_value=5.0, iterations=1, converged=True)
    phi, w = optimal_heuristic_features(inst, dual, {1: 1})
    assert phi == {(1, 1, 0): 6.0}
    assert w[(1, 1, 0)] == 1.0
    # h*(v) = -(w . phi) = -6; the reduced-cost correction for the assigned pair.
    assert dual_heuristic(inst, dual, {1: 1}) == -6.0
    assert dual_heuristic(inst, dual, {1: 2}) == 0.0


def test_dual_search_model_matches_explicit_heuristic():
    inst = forced_label_instance()
    dual = solve_dual(inst.clone_fresh())
    model, extractor = dual_search_model(inst, dual)
    for labels in ({1: 1}, {1: 2}):
        phi = extractor.extract(labels)
        assert model.h(phi) == pytest.approx(dual_heuristic(inst, dual, labels))


@given(random_instances())
@settings(max_examples=100, deadline=None)
def test_weak_duality_property(inst):
    from speedup_search.ilp import Infeasible

    try:
        primal = solve_exact(inst.clone_fresh()).objective
    except Infeasible:
        return
    dual = solve_dual(inst.clone_fresh(), max_iters=120)
    assert dual.dual_value <= primal + 1e-9


def test_zero_gap_greedy_recovers_optimum():
    inst = forced_label_instance()
    primal = solve_exact(inst.clone_fresh()).objective
    dual = solve_dual(inst.clone_fresh())
    assert abs(dual.dual_value - primal) < 1e-6
    model, extractor = dual_search_model(inst, dual)
    outcome = beam_search(inst, PriorityConfig(model, FULL), 1, extractor)
    assert objective_of(inst, outcome.assignment) == pytest.approx(primal)
