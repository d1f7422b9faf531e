"""Online imitation training of the speedup model against an exact solver.

Each example is first solved exactly to obtain a reference structure, then
replayed through beam search under the full priority p(v) = g(v) - w.phi(v).
The search stops as soon as the beam loses every reference-consistent node
or reaches goal depth, and a perceptron-style weight update is applied on
mistakes: toward the reference-consistent node at the failing level, away
from the beam average (mid-search failure) or away from the returned goal
(wrong final structure).  At most one update happens per example per epoch.

Diagnostics for the mistake bound (R_phi^2 + 2 R_g) / gamma^2 are recorded
only at update events: those are exactly the good/bad same-level pairs the
bound's proof quantifies over.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from speedup_search.ilp import (
    Assignment,
    BudgetExhausted,
    Infeasible,
    ProblemInstance,
    SolveResult,
    solve_exact,
)
from speedup_search.model import SpeedupModel
from speedup_search.search import (
    FULL,
    Beam,
    FeatureExtractor,
    PriorityConfig,
    SearchNode,
    breadth_expand,
    filter_beam,
)


class NoPairsRecorded(Exception):
    """Training produced no update events; bound constants are undefined."""


def is_y_good(node: SearchNode, reference: Assignment) -> bool:
    """A node is reference-consistent if every assigned label matches."""
    return all(reference.labels[k] == i for k, i in node.assigned.items())


def is_y_good_beam(beam: Beam, reference: Assignment) -> bool:
    return any(is_y_good(node, reference) for node in beam.nodes)


def set_good(
    node: SearchNode, reference: Assignment, extractor: FeatureExtractor
) -> SearchNode:
    """The same-level node whose assigned variables carry the reference labels."""
    assigned = {k: reference.labels[k] for k in node.assigned}
    return SearchNode(
        assigned=assigned,
        depth=node.depth,
        phi=extractor.extract(assigned),
        g_value=None if node.depth else 0.0,
    )


@dataclass
class UpdateEvent:
    """One weight update with the good/bad pairs the bound proof needs.

    ``pairs`` holds (phi_good, g_good, phi_bad, g_bad) for the good node
    against each bad node involved in the update (the whole beam for a
    mid-search failure, the returned goal for a final mismatch).
    """

    epoch: int
    example: int
    line: int  # 11 = beam lost the reference, 14 = wrong goal
    depth: int
    pairs: list[tuple[dict[str, float], float, dict[str, float], float]]


@dataclass
class TrainResult:
    model: SpeedupModel
    events: list[UpdateEvent]
    epochs_run: int
    converged: bool
    solver_failures: int = 0


def _replay_example(
    instance: ProblemInstance,
    reference: Assignment,
    model: SpeedupModel,
    width: int,
    extractor: FeatureExtractor,
    ordering: Sequence[int],
) -> Optional[tuple[int, SearchNode, list[SearchNode]]]:
    """Search under the current weights; on a mistake return (line, v*, bad nodes)."""
    oracle = instance.oracle
    config = PriorityConfig(model=model, mode=FULL)
    beam = Beam(nodes=(SearchNode.root(),), width=width)
    while True:
        candidates = breadth_expand(instance, beam, ordering, extractor)
        beam, _ = filter_beam(candidates, config, width, oracle)
        if not is_y_good_beam(beam, reference):
            v_star = set_good(beam.top, reference, extractor)
            return 11, v_star, list(beam.nodes)
        if beam.top.depth == len(ordering):
            v_hat = beam.top
            if not is_y_good(v_hat, reference):
                v_star = set_good(v_hat, reference, extractor)
                return 14, v_star, [v_hat]
            return None


def train(
    instances: Sequence[ProblemInstance],
    width: int,
    epochs: int,
    extractor: FeatureExtractor,
    solver: Callable[[ProblemInstance], SolveResult] = solve_exact,
    ordering: Optional[Sequence[int]] = None,
    stop_on_clean_epoch: bool = True,
) -> TrainResult:
    """Run the online speedup-learning loop over ``instances``.

    The reference for each example is solved once and memoized.  Training
    stops early after an epoch with zero updates (the weights are then
    consistent with every training example).  Examples the solver cannot
    finish are skipped and counted.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    model = SpeedupModel()
    events: list[UpdateEvent] = []
    references: dict[int, Optional[Assignment]] = {}
    solver_failures = 0
    epochs_run = 0
    converged = False

    for epoch in range(1, epochs + 1):
        epochs_run = epoch
        epoch_updates = 0
        for idx, instance in enumerate(instances):
            if idx not in references:
                try:
                    references[idx] = solver(instance).assignment
                except (Infeasible, BudgetExhausted):
                    references[idx] = None
                    solver_failures += 1
            reference = references[idx]
            if reference is None:
                continue
            order = (
                list(ordering)
                if ordering is not None
                else list(range(1, instance.n_variables + 1))
            )
            mistake = _replay_example(
                instance, reference, model, width, extractor, order
            )
            if mistake is None:
                continue
            line, v_star, bad_nodes = mistake
            oracle = instance.oracle
            pairs = [
                (dict(v_star.phi), v_star.g(oracle), dict(v.phi), v.g(oracle))
                for v in bad_nodes
            ]
            model.add_scaled(v_star.phi, 1.0)
            scale = -1.0 / len(bad_nodes)
            for v in bad_nodes:
                model.add_scaled(v.phi, scale)
            model.update_count += 1
            epoch_updates += 1
            events.append(
                UpdateEvent(
                    epoch=epoch,
                    example=idx,
                    line=line,
                    depth=v_star.depth,
                    pairs=pairs,
                )
            )
        model.epoch_log.append(epoch_updates)
        if stop_on_clean_epoch and epoch_updates == 0:
            converged = True
            break
    return TrainResult(
        model=model,
        events=events,
        epochs_run=epochs_run,
        converged=converged,
        solver_failures=solver_failures,
    )


@dataclass
class BoundDiagnostics:
    r_phi: float
    r_g: float
    gamma: float
    bound: float
    pairs_examined: int


def _phi_diff_norm(a: Mapping[str, float], b: Mapping[str, float]) -> float:
    keys = set(a) | set(b)
    return math.sqrt(sum((a.get(f, 0.0) - b.get(f, 0.0)) ** 2 for f in keys))


def measure_bound_constants(
    events: Sequence[UpdateEvent], direction: Mapping[str, float]
) -> BoundDiagnostics:
    """Empirical R_phi, R_g and level margin of ``direction`` over update pairs.

    ``direction`` must be a unit vector; gamma is its minimum score gap over
    the recorded good/bad pairs, and the bound is (R_phi^2 + 2 R_g) / gamma^2.
    """
    norm = math.sqrt(sum(v * v for v in direction.values()))
    if not math.isclose(norm, 1.0, rel_tol=1e-9):
        raise ValueError(f"direction must be unit norm, got {norm!r}")
    r_phi = 0.0
    r_g = 0.0
    gamma = math.inf
    examined = 0
    for event in events:
        for phi_good, g_good, phi_bad, g_bad in event.pairs:
            examined += 1
            r_phi = max(r_phi, _phi_diff_norm(phi_good, phi_bad))
            r_g = max(r_g, abs(g_good - g_bad))
            gap = sum(
                direction.get(f, 0.0)
                * (phi_good.get(f, 0.0) - phi_bad.get(f, 0.0))
                for f in set(phi_good) | set(phi_bad)
            )
            gamma = min(gamma, gap)
    if examined == 0:
        raise NoPairsRecorded("no update events to measure")
    bound = math.inf if gamma <= 0 else (r_phi**2 + 2.0 * r_g) / gamma**2
    return BoundDiagnostics(
        r_phi=r_phi, r_g=r_g, gamma=gamma, bound=bound, pairs_examined=examined
    )
