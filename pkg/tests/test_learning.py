"""Online speedup training: goodness, updates, convergence, bound diagnostics."""
import math

import pytest

from speedup_search.ilp import Assignment, Row
from speedup_search.learning import (
    BoundDiagnostics,
    NoPairsRecorded,
    UpdateEvent,
    is_y_good,
    is_y_good_beam,
    measure_bound_constants,
    set_good,
    train,
)
from speedup_search.model import SpeedupModel
from speedup_search.search import Beam, SearchNode
from tests.test_ilp import make_instance
from tests.test_search import LabelExtractor


def test_is_y_good_prefix_semantics():
    ref = Assignment({1: 2, 2: 1})
    good = SearchNode(assigned={1: 2}, depth=1, phi={})
    bad = SearchNode(assigned={1: 1}, depth=1, phi={})
    assert is_y_good(good, ref)
    assert not is_y_good(bad, ref)
    assert is_y_good_beam(Beam(nodes=(bad, good), width=2), ref)
    assert not is_y_good_beam(Beam(nodes=(bad,), width=1), ref)


def test_set_good_fixes_labels_and_features():
    ref = Assignment({1: 2, 2: 1})
    bad = SearchNode(assigned={1: 1}, depth=1, phi={"v1l1": 1.0})
    fixed = set_good(bad, ref, LabelExtractor())
    assert fixed.assigned == {1: 2}
    assert fixed.depth == 1
    assert fixed.phi == {"v1l2": 1.0}


def line11_instance():
    # Cheap labels are wrong: the equality row forces label 1 on variable 1,
    # so the solver reference is (1, 1) but cost-greedy search goes to label 2.
    rows = (Row(((1, 1, 1.0),), 1.0, "="),)
    return make_instance([(1.0, 0.0), (0.0, 1.0)], rows)


def test_single_line11_update_matches_rule():
    inst = line11_instance()
    result = train([inst], width=1, epochs=3, extractor=LabelExtractor())
    assert result.model.update_count == 1
    assert result.events[0].line == 11
    assert result.events[0].depth == 1
    # w = phi(v*) - mean beam phi with |B| = 1.
    assert result.model.weights == {"v1l1": 1.0, "v1l2": -1.0}
    assert result.converged
    assert result.model.epoch_log[0] == 1 and result.model.epoch_log[1] == 0


def test_line14_update_on_wrong_goal():
    # Wide beam keeps the reference prefix alive to goal depth; the top goal
    # node is still the cheap wrong one, triggering the final-mismatch update.
    inst = line11_instance()
    result = train([inst], width=4, epochs=3, extractor=LabelExtractor())
    assert result.events[0].line == 14
    assert result.converged


def test_at_most_one_update_per_example_per_epoch():
    inst = line11_instance()
    result = train([inst, inst.clone_fresh()], width=1, epochs=1,
                   extractor=LabelExtractor(), stop_on_clean_epoch=False)
    assert result.model.epoch_log == [result.model.update_count]
    assert result.model.update_count <= 2


def test_train_validates_arguments():
    inst = line11_instance()
    with pytest.raises(ValueError):
        train([inst], width=0, epochs=1, extractor=LabelExtractor())
    with pytest.raises(ValueError):
        train([inst], width=1, epochs=0, extractor=LabelExtractor())


def test_train_skips_infeasible_examples():
    rows = (
        Row(((1, 1, 1.0),), 1.0, "="),
        Row(((1, 1, 1.0),), 0.0, "="),
    )
    broken = make_instance([(0.0, 1.0)], rows)
    ok = line11_instance()
    result = train([broken, ok], width=1, epochs=2, extractor=LabelExtractor())
    assert result.solver_failures == 1
    assert result.model.update_count >= 1


def test_measure_bound_constants_hand_case():
    event = UpdateEvent(
        epoch=1, example=0, line=11, depth=1,
        pairs=[({"a": 1.0}, 0.5, {"b": 1.0}, 2.0)],
    )
    direction = {"a": 1.0 / math.sqrt(2), "b": -1.0 / math.sqrt(2)}
    diag = measure_bound_constants([event], direction)
    assert diag.r_phi == pytest.approx(math.sqrt(2))
    assert diag.r_g == pytest.approx(1.5)
    assert diag.gamma == pytest.approx(math.sqrt(2))
    assert diag.bound == pytest.approx((2 + 3.0) / 2.0)
    assert diag.pairs_examined == 1


def test_measure_bound_constants_requires_unit_direction():
    event = UpdateEvent(epoch=1, example=0, line=11, depth=1,
                        pairs=[({}, 0.0, {}, 0.0)])
    with pytest.raises(ValueError):
        measure_bound_constants([event], {"a": 2.0})


def test_measure_bound_constants_no_pairs():
    with pytest.raises(NoPairsRecorded):
        measure_bound_constants([], {"a": 1.0})


def test_training_default_extractor_required():
    inst = line11_instance()
    # Training without features can never fix a mistaken ranking; the loop
    # still terminates after the epoch cap.
    from speedup_search.search import NullExtractor

    result = train([inst], width=1, epochs=2, extractor=NullExtractor(),
                   stop_on_clean_epoch=False)
    assert result.epochs_run == 2
