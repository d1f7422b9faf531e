"""Benchmark harness: run every inference method over a dataset and score it.

F1 is micro-averaged over (variable, label) decisions.  Null labels (NoEnt,
NoRel) never count as positives, so a method cannot score by predicting
"nothing everywhere"; when reference and prediction both contain zero
positives the score is defined as 1.0.  Wall-clock timings go to a separate
report so that metric exports stay byte-identical across runs.
"""
from __future__ import annotations

import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from speedup_search.er_task import ERInstance, ERFeatureExtractor, structure_valid
from speedup_search.ilp import (
    Assignment,
    Infeasible,
    ProblemInstance,
    check_feasible,
    solve_exact,
)
from speedup_search.model import SpeedupModel
from speedup_search.search import (
    FULL,
    GATED,
    PriorityConfig,
    beam_search,
    constrained_greedy,
    unconstrained_greedy,
)

NULL_ENTITY_NAME = "NoEnt"
NULL_RELATION_NAME = "NoRel"


@dataclass
class F1Counts:
    tp: int = 0
    pred_pos: int = 0
    gold_pos: int = 0

    def add(self, other: "F1Counts") -> None:
        self.tp += other.tp
        self.pred_pos += other.pred_pos
        self.gold_pos += other.gold_pos

    @property
    def precision(self) -> float:
        if self.pred_pos == 0:
            return 1.0 if self.gold_pos == 0 else 0.0
        return self.tp / self.pred_pos

    @property
    def recall(self) -> float:
        if self.gold_pos == 0:
            return 1.0 if self.pred_pos == 0 else 0.0
        return self.tp / self.gold_pos

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        if p + r == 0.0:
            return 0.0
        if self.pred_pos == 0 and self.gold_pos == 0:
            return 1.0
        return 2.0 * p * r / (p + r)


def f1_counts(
    pred: Assignment,
    ref: Assignment,
    variables: Sequence[int],
    null_label: Callable[[int], Optional[int]],
    include_null: bool = False,
) -> F1Counts:
    """Micro counts over ``variables``; ``null_label(k)`` gives the ignored label."""
    counts = F1Counts()
    for k in variables:
        p, r = pred.labels[k], ref.labels[k]
        null = None if include_null else null_label(k)
        if p != null:
            counts.pred_pos += 1
        if r != null:
            counts.gold_pos += 1
        if p == r and r != null:
            counts.tp += 1
    return counts


def er_null_label(instance: ERInstance) -> Callable[[int], int]:
    layout = instance.layout
    ent_null = layout.schema.entity_labels.index(NULL_ENTITY_NAME) + 1
    rel_null = layout.schema.relation_labels.index(NULL_RELATION_NAME) + 1
    return lambda k: ent_null if layout.is_entity(k) else rel_null


def er_variable_classes(instance: ERInstance) -> dict[str, list[int]]:
    layout = instance.layout
    e = layout.entity_count
    return {
        "entity": list(range(1, e + 1)),
        "relation": list(range(e + 1, layout.n_variables + 1)),
        "all": list(range(1, layout.n_variables + 1)),
    }


@dataclass
class MethodRun:
    """One method's output on one instance."""

    labels: dict[int, int]
    valid: bool
    oracle_calls: int
    oracle_lookups: int
    failed: bool = False


@dataclass
class MethodReport:
    name: str
    n: int = 0
    n_valid: int = 0
    n_failed: int = 0
    f1_gold: dict[str, F1Counts] = field(default_factory=dict)
    f1_solver: dict[str, F1Counts] = field(default_factory=dict)
    total_calls: int = 0
    total_lookups: int = 0
    wins_vs_solver: int = 0  # instances with fewer calls than solver lookups
    times: list[float] = field(default_factory=list)

    @property
    def validity(self) -> float:
        return self.n_valid / self.n if self.n else 0.0

    @property
    def mean_calls(self) -> float:
        return self.total_calls / self.n if self.n else 0.0

    @property
    def mean_lookups(self) -> float:
        return self.total_lookups / self.n if self.n else 0.0

    @property
    def win_rate(self) -> float:
        return self.wins_vs_solver / self.n if self.n else 0.0


@dataclass
class EvalReport:
    methods: dict[str, MethodReport]
    n_instances: int
    repeat: int


def method_suite(
    model: SpeedupModel,
    widths: Sequence[int] = (1,),
    thetas: Sequence[float] = (),
    gated_width: int = 1,
) -> dict[str, Callable[[ERInstance, ProblemInstance], Assignment]]:
    """Name -> runner map; each runner sees a fresh clone of the problem."""

    def make_speedup(b: int):
        def run(er: ERInstance, problem: ProblemInstance) -> Assignment:
            config = PriorityConfig(model=model, mode=FULL)
            return beam_search(
                problem, config, b, ERFeatureExtractor(er.layout)
            ).assignment

        return run

    def make_gated(b: int, theta: float):
        def run(er: ERInstance, problem: ProblemInstance) -> Assignment:
            config = PriorityConfig(model=model, mode=GATED, theta=theta)
            return beam_search(
                problem, config, b, ERFeatureExtractor(er.layout)
            ).assignment

        return run

    suite: dict[str, Callable] = {
        "exact": lambda er, problem: solve_exact(problem).assignment,
        "greedy": lambda er, problem: unconstrained_greedy(problem),
        "constrained_greedy": lambda er, problem: constrained_greedy(problem),
    }
    for b in widths:
        suite[f"speedup_b{b}"] = make_speedup(b)
    for theta in thetas:
        suite[f"gated_b{gated_width}_theta{theta:g}"] = make_gated(gated_width, theta)
    return suite


def _run_method(runner, er: ERInstance) -> MethodRun:
    problem = er.problem.clone_fresh()
    try:
        result = runner(er, problem)
    except Infeasible:
        return MethodRun(labels={}, valid=False, oracle_calls=0,
                         oracle_lookups=0, failed=True)
    valid = check_feasible(problem, result) and structure_valid(er.layout, result)
    return MethodRun(
        labels=dict(result.labels),
        valid=valid,
        oracle_calls=problem.oracle.call_count,
        oracle_lookups=problem.oracle.lookup_count,
    )


def evaluate(
    instances: Sequence[ERInstance],
    model: SpeedupModel,
    widths: Sequence[int] = (1,),
    thetas: Sequence[float] = (),
    repeat: int = 0,
    workers: int = 1,
) -> EvalReport:
    """Score every method of the suite on every instance.

    Each method runs on a fresh oracle clone so work metrics are honest.
    With ``repeat`` > 0 each method is additionally re-run that many times
    per instance for wall-clock timing (timings never affect metrics).
    """
    suite = method_suite(model, widths=widths, thetas=thetas)
    reports = {name: MethodReport(name=name) for name in suite}

    def score_instance(er: ERInstance):
        classes = er_variable_classes(er)
        null_of = er_null_label(er)
        runs = {name: _run_method(runner, er) for name, runner in suite.items()}
        solver_run = runs["exact"]
        solver_ref = Assignment(solver_run.labels)
        out = []
        for name, run in runs.items():
            f1_gold: dict[str, F1Counts] = {}
            f1_solver: dict[str, F1Counts] = {}
            if not run.failed:
                pred = Assignment(run.labels)
                for cls, variables in classes.items():
                    if er.problem.gold is not None:
                        f1_gold[cls] = f1_counts(
                            pred, er.problem.gold, variables, null_of
                        )
                    if not solver_run.failed:
                        f1_solver[cls] = f1_counts(pred, solver_ref, variables, null_of)
            times = []
            for _ in range(repeat):
                fresh = er.problem.clone_fresh()
                start = time.perf_counter()
                suite[name](er, fresh)
                times.append(time.perf_counter() - start)
            out.append((name, run, f1_gold, f1_solver, solver_run.oracle_lookups, times))
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scored = list(pool.map(score_instance, instances))
    else:
        scored = [score_instance(er) for er in instances]

    for rows in scored:
        for name, run, f1_gold, f1_solver, solver_lookups, times in rows:
            report = reports[name]
            report.n += 1
            report.times.extend(times)
            if run.failed:
                report.n_failed += 1
                continue
            report.n_valid += int(run.valid)
            report.total_calls += run.oracle_calls
            report.total_lookups += run.oracle_lookups
            if run.oracle_calls < solver_lookups:
                report.wins_vs_solver += 1
            for cls, counts in f1_gold.items():
                report.f1_gold.setdefault(cls, F1Counts()).add(counts)
            for cls, counts in f1_solver.items():
                report.f1_solver.setdefault(cls, F1Counts()).add(counts)
    return EvalReport(methods=reports, n_instances=len(instances), repeat=repeat)


def metrics_lines(report: EvalReport) -> list[str]:
    """Deterministic CSV body; excludes anything wall-clock dependent."""
    lines = [
        "method,n,validity,failed,"
        "f1_gold_entity,f1_gold_relation,f1_gold_all,"
        "f1_solver_entity,f1_solver_relation,f1_solver_all,"
        "mean_oracle_calls,mean_oracle_lookups,call_win_rate_vs_solver"
    ]

    def fmt(counts: Optional[F1Counts]) -> str:
        return f"{counts.f1:.6f}" if counts is not None else ""

    for name in sorted(report.methods):
        r = report.methods[name]
        lines.append(
            ",".join(
                [
                    name,
                    str(r.n),
                    f"{r.validity:.6f}",
                    str(r.n_failed),
                    fmt(r.f1_gold.get("entity")),
                    fmt(r.f1_gold.get("relation")),
                    fmt(r.f1_gold.get("all")),
                    fmt(r.f1_solver.get("entity")),
                    fmt(r.f1_solver.get("relation")),
                    fmt(r.f1_solver.get("all")),
                    f"{r.mean_calls:.6f}",
                    f"{r.mean_lookups:.6f}",
                    f"{r.win_rate:.6f}",
                ]
            )
        )
    return lines


def timing_lines(report: EvalReport) -> list[str]:
    lines = ["method mean_seconds std_seconds runs"]
    for name in sorted(report.methods):
        r = report.methods[name]
        if not r.times:
            lines.append(f"{name} nan nan 0")
            continue
        mean = statistics.fmean(r.times)
        std = statistics.stdev(r.times) if len(r.times) > 1 else 0.0
        lines.append(f"{name} {mean:.6f} {std:.6f} {len(r.times)}")
    return lines
