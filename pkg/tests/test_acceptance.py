"""Acceptance gate: seven pinned end-to-end criteria with fixed seeds.

Each test prints a single PASS/FAIL line with the measured quantities so a
full run reads as a checklist.  Criteria 5 and 6 share one trained model
and one held-out evaluation (module-scoped fixture) since they describe two
views of the same benchmark run.
"""
import os
import time

import numpy as np
import pytest

from speedup_search.cli import main
from speedup_search.er_task import ERFeatureExtractor, build_instance
from speedup_search.evaluation import evaluate
from speedup_search.learning import measure_bound_constants, train
from speedup_search.verification import (
    suite_duality,
    suite_exact_solver,
    suite_gate_equivalence,
    suite_mistake_bound,
)

SEED = 20260823


def report(tag, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {tag}: {detail}")
    assert ok, f"{tag}: {detail}"


def test_criterion_1_solver_equals_brute_force():
    start = time.perf_counter()
    suite = suite_exact_solver(np.random.default_rng(SEED), n_small=170, n_large=30)
    elapsed = time.perf_counter() - start
    ok = suite.passed and elapsed < 30.0
    report(
        "criterion 1 (exact solver vs brute force)",
        ok,
        f"{suite.checked} instances, {len(suite.failures)} mismatches, "
        f"{elapsed:.1f}s (< 30s)",
    )


def test_criterion_2_mistake_bound():
    start = time.perf_counter()
    suite = suite_mistake_bound(
        np.random.default_rng(SEED + 1), n_instances=200,
        entity_count=2, margin_target=0.5,
    )
    elapsed = time.perf_counter() - start
    updates = suite.details["updates"]
    bound = suite.details.get("bound", float("inf"))
    ok = suite.passed and updates <= bound and elapsed < 60.0
    report(
        "criterion 2 (mistake bound on separable set)",
        ok,
        f"updates={updates} <= bound={bound}, "
        f"gamma={suite.details.get('gamma')}, zero-update epoch reached, "
        f"{elapsed:.1f}s (< 60s)",
    )


def test_criterion_3_gate_set_equality():
    start = time.perf_counter()
    suite = suite_gate_equivalence(
        np.random.default_rng(SEED + 2), n_qualifying=10_000, widths=(1, 2, 3)
    )
    elapsed = time.perf_counter() - start
    ok = suite.passed and suite.checked >= 10_000 and elapsed < 30.0
    report(
        "criterion 3 (gated beam equals full beam when gap exceeds spread)",
        ok,
        f"{suite.checked} qualifying candidate sets, "
        f"{len(suite.failures)} set mismatches, {elapsed:.1f}s (< 30s)",
    )


def test_criterion_4_weak_duality_and_zero_gap():
    start = time.perf_counter()
    suite = suite_duality(np.random.default_rng(SEED + 3), n_instances=100)
    elapsed = time.perf_counter() - start
    zero_gap = suite.details["zero_gap_instances"]
    recovered = suite.details["exact_recovered"]
    ok = suite.passed and zero_gap > 0 and recovered == zero_gap and elapsed < 60.0
    report(
        "criterion 4 (weak duality; zero-gap greedy exactness)",
        ok,
        f"100 instances, zero-gap fraction {zero_gap / 100:.2f}, "
        f"greedy recovered optimum on {recovered}/{zero_gap}, "
        f"{elapsed:.1f}s (< 60s)",
    )


@pytest.fixture(scope="module")
def benchmark_run():
    """One trained model evaluated on 1,000 hard held-out instances."""
    start = time.perf_counter()
    rng = np.random.default_rng(SEED + 4)
    train_set = [build_instance(2, rng, "hard") for _ in range(300)]
    test_set = [build_instance(2, rng, "hard") for _ in range(1000)]
    result = train(
        [er.problem for er in train_set],
        width=4,
        epochs=5,
        extractor=ERFeatureExtractor(train_set[0].layout),
    )
    reports = evaluate(test_set, result.model, widths=(1,), thetas=(0.0, 0.25, 0.5))
    return reports, time.perf_counter() - start


def test_criterion_5_table1_regime(benchmark_run):
    reports, elapsed = benchmark_run
    m = reports.methods
    f1 = lambda name: m[name].f1_solver["all"].f1
    checks = {
        "greedy validity <= 0.5": m["greedy"].validity <= 0.5,
        "speedup b=1 validity >= 0.95": m["speedup_b1"].validity >= 0.95,
        "speedup F1 >= greedy F1": f1("speedup_b1") >= f1("greedy"),
        "speedup beats solver lookups on >= 90%": m["speedup_b1"].win_rate >= 0.9,
        "constrained greedy validity == 1.0": m["constrained_greedy"].validity == 1.0,
        "runtime < 180s": elapsed < 180.0,
    }
    ok = all(checks.values())
    report(
        "criterion 5 (regime: greedy fast but invalid, speedup valid and cheap)",
        ok,
        f"greedy_valid={m['greedy'].validity:.3f} "
        f"speedup_valid={m['speedup_b1'].validity:.3f} "
        f"speedup_f1={f1('speedup_b1'):.3f} greedy_f1={f1('greedy'):.3f} "
        f"win_rate={m['speedup_b1'].win_rate:.3f} "
        f"cg_valid={m['constrained_greedy'].validity:.3f} {elapsed:.1f}s; "
        + "; ".join(k for k, v in checks.items() if not v),
    )


def test_criterion_6_table2_regime(benchmark_run):
    reports, elapsed = benchmark_run
    m = reports.methods
    f1 = lambda name: m[name].f1_solver["all"].f1
    ungated = "speedup_b1"
    best = max(("gated_b1_theta0.25", "gated_b1_theta0.5"), key=f1)
    drop = 1.0 - m[best].mean_calls / m[ungated].mean_calls
    checks = {
        "best-theta F1 within 0.05 of ungated": abs(f1(best) - f1(ungated)) <= 0.05,
        "best-theta mean calls drop >= 25%": drop >= 0.25,
        "theta=0 F1 degraded (> 0.01 below ungated)":
            f1("gated_b1_theta0") < f1(ungated) - 0.01,
        "runtime < 180s": elapsed < 180.0,
    }
    ok = all(checks.values())
    report(
        "criterion 6 (regime: gate saves calls at matched F1; theta=0 degrades)",
        ok,
        f"ungated_f1={f1(ungated):.3f} best={best} best_f1={f1(best):.3f} "
        f"call_drop={drop:.1%} theta0_f1={f1('gated_b1_theta0'):.3f} "
        f"{elapsed:.1f}s; " + "; ".join(k for k, v in checks.items() if not v),
    )


def test_criterion_7_determinism(tmp_path):
    gen_args = ["--count", "25", "--seed", str(SEED), "--difficulty", "hard"]
    exports = {}
    for tag in ("a", "b"):
        data = str(tmp_path / f"data_{tag}")
        model = str(tmp_path / f"model_{tag}.txt")
        out = str(tmp_path / f"report_{tag}")
        assert main(["generate", "--out", data] + gen_args) == 0
        assert main(["train", "--data", data, "--model", model,
                     "--width", "4", "--epochs", "3"]) == 0
        assert main(["eval", "--data", data, "--model", model, "--out", out,
                     "--widths", "1", "--thetas", "0,0.25,0.5"]) == 0
        blobs = {}
        for name in sorted(os.listdir(data)):
            with open(os.path.join(data, name), "rb") as fh:
                blobs[f"data/{name}"] = fh.read()
        with open(model, "rb") as fh:
            blobs["model"] = fh.read()
        with open(os.path.join(out, "metrics.csv"), "rb") as fh:
            blobs["metrics"] = fh.read()
        exports[tag] = blobs
    mismatched = [
        name for name in exports["a"] if exports["a"][name] != exports["b"][name]
    ]
    ok = not mismatched
    report(
        "criterion 7 (byte-identical dataset, model and metric exports)",
        ok,
        f"{len(exports['a'])} exports compared, mismatches: {mismatched or 'none'}",
    )
