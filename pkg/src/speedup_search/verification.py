"""Independent correctness suites for the solver, the dual, the gate and training.

Every suite checks an implementation against an independently coded oracle
or a proved guarantee, reporting counterexamples instead of asserting, so
the command-line ``verify`` subcommand can print a readable report and the
test suite can pin the same checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from speedup_search.er_task import (
    ERFeatureExtractor,
    build_instance,
    plant_separable_set,
)
from speedup_search.ilp import (
    Assignment,
    Infeasible,
    ProblemInstance,
    check_feasible,
    objective_of,
    solve_exact,
)
from speedup_search.lagrangian import dual_search_model, solve_dual
from speedup_search.learning import (
    NoPairsRecorded,
    measure_bound_constants,
    train,
)
from speedup_search.model import SpeedupModel
from speedup_search.search import (
    FULL,
    GATED,
    HEURISTIC_ONLY,
    Beam,
    PriorityConfig,
    SearchNode,
    beam_search,
    filter_beam,
    heuristic_gap,
    path_cost_gap,
)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checked: int
    failures: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def lines(self) -> list[str]:
        status = "PASS" if self.passed else "FAIL"
        out = [f"[{status}] {self.name}: {self.checked} checks, "
               f"{len(self.failures)} failures"]
        for key in sorted(self.details):
            out.append(f"    {key}={self.details[key]}")
        out.extend(f"    counterexample: {f}" for f in self.failures[:5])
        return out


def brute_force_solve(instance: ProblemInstance) -> tuple[Assignment, float]:
    """Exhaustive vectorized minimization, independent of the search solver.

    Enumerates assignments in lexicographic order, compresses the feasible
    set row by row (>= rows first, they prune hardest), and accumulates the
    objective variable by variable in float64 so that equal assignments
    produce objectives bit-identical to the solver's left-to-right sums.
    Ties break to the lexicographically smallest label vector.
    """
    K = instance.n_variables
    arities = [instance.arity(k) for k in range(1, K + 1)]
    total = int(np.prod(arities))
    # Column k cycles through its labels with period prod(arities[k+1:]),
    # which enumerates assignments in lexicographic order.
    feasible = np.empty((total, K), dtype=np.int8)
    repeat = total
    for k, arity in enumerate(arities):
        repeat //= arity
        tile = total // (repeat * arity)
        feasible[:, k] = np.tile(
            np.repeat(np.arange(1, arity + 1, dtype=np.int8), repeat), tile
        )

    rows = sorted(
        instance.constraints.rows, key=lambda r: 0 if r.sense == ">=" else 1
    )
    for row in rows:
        val = np.zeros(feasible.shape[0])
        for k, i, c in row.coeffs:
            val += c * (feasible[:, k - 1] == i)
        if row.sense == "=":
            ok = val == row.rhs
        elif row.sense == "<=":
            ok = val <= row.rhs
        else:
            ok = val >= row.rhs
        feasible = feasible[ok]
    if feasible.shape[0] == 0:
        raise Infeasible("brute force found no feasible assignment")

    obj = np.zeros(feasible.shape[0])
    for k in range(1, K + 1):
        costs = np.array(
            [instance.oracle.source(k, i) for i in range(1, arities[k - 1] + 1)]
        )
        obj = obj + costs[feasible[:, k - 1] - 1]
    best = int(np.flatnonzero(obj == obj.min())[0])
    assignment = Assignment(
        {k: int(feasible[best, k - 1]) for k in range(1, K + 1)}
    )
    return assignment, float(obj[best])


def suite_exact_solver(
    rng: np.random.Generator,
    n_small: int = 170,
    n_large: int = 30,
    difficulty: str = "medium",
) -> SuiteResult:
    """Solver output must match brute force exactly, assignment and objective."""
    plan = [(2, n_small), (3, n_large)]
    failures: list[str] = []
    checked = 0
    for entity_count, count in plan:
        for _ in range(count):
            er = build_instance(entity_count, rng, difficulty)
            checked += 1
            result = solve_exact(er.problem.clone_fresh())
            ref_assignment, ref_obj = brute_force_solve(er.problem)
            if result.assignment.labels != ref_assignment.labels:
                failures.append(
                    f"E={entity_count}: solver {result.assignment} "
                    f"!= reference {ref_assignment}"
                )
            elif result.objective != ref_obj:
                failures.append(
                    f"E={entity_count}: objective {result.objective!r} "
                    f"!= reference {ref_obj!r}"
                )
    return SuiteResult(
        name="exact solver vs brute force",
        passed=not failures,
        checked=checked,
        failures=failures,
    )


def suite_duality(
    rng: np.random.Generator,
    n_instances: int = 100,
    entity_count: int = 2,
    difficulty: str = "easy",
    weak_tol: float = 1e-9,
    gap_tol: float = 1e-6,
) -> SuiteResult:
    """theta(u) <= primal always; on zero-gap instances greedy + h* is exact."""
    failures: list[str] = []
    zero_gap = 0
    exact_recovered = 0
    for _ in range(n_instances):
        er = build_instance(entity_count, rng, difficulty)
        primal = solve_exact(er.problem.clone_fresh()).objective
        dual = solve_dual(er.problem.clone_fresh())
        if dual.dual_value > primal + weak_tol:
            failures.append(
                f"dual {dual.dual_value!r} exceeds primal {primal!r}"
            )
            continue
        if abs(dual.dual_value - primal) >= gap_tol:
            continue
        zero_gap += 1
        problem = er.problem.clone_fresh()
        model, extractor = dual_search_model(problem, dual)
        config = PriorityConfig(model=model, mode=FULL)
        outcome = beam_search(problem, config, width=1, extractor=extractor)
        value = objective_of(problem, outcome.assignment)
        if not check_feasible(problem, outcome.assignment):
            failures.append(f"zero-gap greedy returned infeasible {outcome.assignment}")
        elif abs(value - primal) > weak_tol:
            failures.append(
                f"zero-gap greedy value {value!r} != primal {primal!r}"
            )
        else:
            exact_recovered += 1
    return SuiteResult(
        name="weak duality and zero-gap greedy exactness",
        passed=not failures,
        checked=n_instances,
        failures=failures,
        details={"zero_gap_instances": zero_gap, "exact_recovered": exact_recovered},
    )


class _PresetOracle:
    """Stand-in oracle for synthetic nodes whose g is already resolved."""

    def cost(self, k, i):
        raise AssertionError("synthetic nodes must never resolve costs")


def _synthetic_candidates(
    gs: Sequence[float], hs: Sequence[float]
) -> tuple[list[SearchNode], SpeedupModel]:
    """Depth-1 nodes with preset path costs and h realized through a model."""
    model = SpeedupModel(weights={"x": -1.0})
    nodes = []
    root = SearchNode.root()
    for idx, (g, h) in enumerate(zip(gs, hs)):
        node = SearchNode(
            assigned={1: idx + 1},
            depth=1,
            phi={"x": h},
            parent=root,
            new_pair=(1, idx + 1),
            g_value=g,
        )
        nodes.append(node)
    return nodes, model


def suite_gate_equivalence(
    rng: np.random.Generator,
    n_qualifying: int = 10_000,
    widths: Sequence[int] = (1, 2, 3),
    max_trials: int = 1_000_000,
) -> SuiteResult:
    """When the heuristic gap exceeds the cost spread, h-only pruning is safe.

    Random candidate sets with preset g and h; whenever
    delta = h(v_{b+1}) - h(v_b) strictly exceeds the g spread, the top-b
    sets under h alone and under g + h must coincide.  Checked through the
    real ``filter_beam`` with a gate threshold of exactly the g spread.
    """
    failures: list[str] = []
    qualifying = 0
    trials = 0
    oracle = _PresetOracle()
    while qualifying < n_qualifying and trials < max_trials:
        trials += 1
        b = int(rng.choice(widths))
        n = int(rng.integers(b + 1, 13))
        g_scale = float(rng.choice([0.05, 0.2, 1.0]))
        gs = [float(x) for x in rng.uniform(0.0, g_scale, size=n)]
        hs = [float(x) for x in rng.uniform(0.0, 10.0, size=n)]
        nodes, model = _synthetic_candidates(gs, hs)
        delta = heuristic_gap(nodes, model, b)
        spread = path_cost_gap(nodes, oracle)
        if not delta > spread:
            continue
        qualifying += 1
        gated_config = PriorityConfig(model=model, mode=GATED, theta=spread)
        full_config = PriorityConfig(model=model, mode=FULL)
        gated_beam, record = filter_beam(nodes, gated_config, b, oracle)
        full_beam, _ = filter_beam(nodes, full_config, b, oracle)
        if not record.gate_taken:
            failures.append(f"gate did not fire with delta={delta} theta={spread}")
            continue
        gated_set = {node.path() for node in gated_beam.nodes}
        full_set = {node.path() for node in full_beam.nodes}
        if gated_set != full_set:
            failures.append(
                f"b={b} delta={delta:.4f} spread={spread:.4f}: "
                f"h-only kept {sorted(gated_set)} but full kept {sorted(full_set)}"
            )
    passed = not failures and qualifying >= n_qualifying
    return SuiteResult(
        name="gate equivalence under large heuristic gaps",
        passed=passed,
        checked=qualifying,
        failures=failures,
        details={"trials": trials},
    )


def suite_mistake_bound(
    rng: np.random.Generator,
    n_instances: int = 200,
    entity_count: int = 2,
    margin_target: float = 0.5,
    width: int = 1,
    epochs: int = 10,
) -> SuiteResult:
    """On a level-separable set, updates never exceed the proved bound.

    Trains on planted instances whose certified unit direction has level
    margin >= ``margin_target``, then checks the update count against
    (R_phi^2 + 2 R_g) / gamma^2 measured on the recorded update pairs, and
    that training reached an update-free epoch.
    """
    planted = plant_separable_set(n_instances, entity_count, margin_target, rng)
    extractor = ERFeatureExtractor(planted.instances[0].layout)
    problems = [er.problem for er in planted.instances]
    result = train(problems, width=width, epochs=epochs, extractor=extractor)

    failures: list[str] = []
    details: dict = {
        "updates": result.model.update_count,
        "epochs_run": result.epochs_run,
        "certified_margin": round(planted.certified_margin, 6),
    }
    if not result.converged:
        failures.append(f"no update-free epoch within {epochs} epochs")
    if result.events:
        diag = measure_bound_constants(result.events, planted.direction)
        details.update(
            r_phi=round(diag.r_phi, 6),
            r_g=round(diag.r_g, 6),
            gamma=round(diag.gamma, 6),
            bound=round(diag.bound, 6),
        )
        if diag.gamma < planted.certified_margin - 1e-9:
            failures.append(
                f"recorded pair gap {diag.gamma} below certified margin "
                f"{planted.certified_margin}"
            )
        if not result.model.update_count <= diag.bound:
            failures.append(
                f"{result.model.update_count} updates exceed bound {diag.bound}"
            )
    return SuiteResult(
        name="mistake bound on separable training",
        passed=not failures,
        checked=n_instances,
        failures=failures,
        details=details,
    )


def run_all_suites(seed: int) -> list[SuiteResult]:
    return [
        suite_exact_solver(np.random.default_rng(seed)),
        suite_duality(np.random.default_rng(seed + 1)),
        suite_gate_equivalence(np.random.default_rng(seed + 2)),
        suite_mistake_bound(np.random.default_rng(seed + 3)),
    ]
