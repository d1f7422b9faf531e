"""Entity-relation task: layout, rows, features, validator, generators."""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speedup_search.er_task import (
    ENTITY_LABELS,
    NO_ENT,
    NO_REL,
    RELATION_LABELS,
    CalibrationFailed,
    ERFeatureExtractor,
    ERLayout,
    build_instance,
    certify_margin,
    extract_features,
    plant_separable_set,
    planted_direction,
    structure_valid,
)
from speedup_search.ilp import Assignment, check_feasible
from speedup_search.search import unconstrained_greedy

LAYOUT2 = ERLayout(2)


def ent(name):
    return ENTITY_LABELS.index(name) + 1


def rel(name):
    return RELATION_LABELS.index(name) + 1


def test_layout_arithmetic():
    assert LAYOUT2.n_variables == 4
    assert [v.arity for v in LAYOUT2.variable_specs()] == [4, 4, 6, 6]
    assert len(LAYOUT2.constraint_rows().rows) == 21
    layout3 = ERLayout(3)
    assert layout3.n_variables == 9
    assert len(layout3.constraint_rows().rows) == 63
    assert ERLayout.from_variable_count(9).entity_count == 3
    with pytest.raises(ValueError):
        ERLayout.from_variable_count(5)


def test_feature_extraction_full_structure():
    # Entities (person, location), forward relation LiveIn, reverse unassigned.
    assigned = {1: ent("person"), 2: ent("location"), 3: rel("LiveIn")}
    phi = extract_features(LAYOUT2, assigned)
    assert phi == {
        "pair:src=person|rel=LiveIn": 1.0,
        "pair:rel=LiveIn|tgt=location": 1.0,
        "triple:src=person|rel=LiveIn|tgt=location": 1.0,
    }


def test_feature_extraction_empty_and_entity_only():
    assert extract_features(LAYOUT2, {}) == {}
    assert extract_features(LAYOUT2, {1: 1, 2: 3}) == {}


def test_feature_firing_requires_constituents():
    # Relation assigned before its entities: nothing fires until they arrive.
    phi = extract_features(LAYOUT2, {3: rel("LiveIn")})
    assert phi == {}


@given(
    st.permutations([1, 2, 3, 4]),
    st.tuples(
        st.integers(1, 4), st.integers(1, 4), st.integers(1, 6), st.integers(1, 6)
    ),
)
@settings(max_examples=200, deadline=None)
def test_incremental_extraction_order_invariance(order, labels):
    """Folding deltas along any assignment order equals from-scratch counts."""
    extractor = ERFeatureExtractor(LAYOUT2)
    assigned = {}
    phi = {}
    for k in order:
        for f, v in extractor.delta(assigned, k, labels[k - 1]).items():
            phi[f] = phi.get(f, 0.0) + v
        assigned[k] = labels[k - 1]
    phi = {f: v for f, v in phi.items() if v != 0.0}
    assert phi == extract_features(LAYOUT2, assigned)


def test_rule_validator_agrees_with_rows():
    instance = build_instance(2, np.random.default_rng(0)).problem
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        a = Assignment({
            1: int(rng.integers(1, 5)),
            2: int(rng.integers(1, 5)),
            3: int(rng.integers(1, 7)),
            4: int(rng.integers(1, 7)),
        })
        assert check_feasible(instance, a) == structure_valid(LAYOUT2, a)


def test_noent_closure():
    rng = np.random.default_rng(2)
    instance = build_instance(2, rng).problem
    for labels in itertools.product(range(1, 5), range(1, 5),
                                    range(1, 7), range(1, 7)):
        a = Assignment(dict(zip((1, 2, 3, 4), labels)))
        if not check_feasible(instance, a):
            continue
        for (x, y), k in LAYOUT2.pair_var.items():
            if a.labels[x] == NO_ENT or a.labels[y] == NO_ENT:
                assert a.labels[k] == NO_REL


def test_build_instance_gold_is_feasible():
    rng = np.random.default_rng(3)
    for entity_count in (2, 3):
        for _ in range(20):
            er = build_instance(entity_count, rng)
            assert check_feasible(er.problem, er.problem.gold)
            assert structure_valid(er.layout, er.problem.gold)


def test_build_instance_rejects_bad_entity_count():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        build_instance(1, rng)
    with pytest.raises(ValueError):
        build_instance(7, rng)


def test_hard_profile_breaks_unconstrained_greedy():
    rng = np.random.default_rng(4)
    invalid = 0
    n = 300
    for _ in range(n):
        er = build_instance(2, rng, "hard")
        pred = unconstrained_greedy(er.problem.clone_fresh())
        invalid += not check_feasible(er.problem, pred)
    assert invalid / n >= 0.5


def test_planted_direction_is_unit():
    direction = planted_direction()
    norm = sum(v * v for v in direction.values()) ** 0.5
    assert norm == pytest.approx(1.0)


def test_certified_margin_value():
    gold = {1: ent("organization"), 2: ent("organization"),
            3: NO_REL, 4: NO_REL}
    margin = certify_margin(LAYOUT2, gold, planted_direction())
    # 2.2 raw gap over the 144-feature direction norm sqrt(4.41) = 2.1.
    assert margin == pytest.approx(2.2 / 2.1)


def test_plant_separable_set_contract():
    planted = plant_separable_set(10, 2, 0.5, np.random.default_rng(5))
    assert planted.certified_margin >= 0.5
    gold = planted.instances[0].problem.gold
    for er in planted.instances:
        assert er.separable
        assert er.problem.gold.labels == gold.labels
        assert check_feasible(er.problem, er.problem.gold)


def test_plant_separable_set_unreachable_margin():
    with pytest.raises(CalibrationFailed):
        plant_separable_set(1, 2, 100.0, np.random.default_rng(6))
    with pytest.raises(ValueError):
        plant_separable_set(1, 2, 0.0, np.random.default_rng(6))
