"""Inference as beam search.

Nodes are partial assignments; candidates come from expanding every beam
node on the single next variable of a fixed ordering, so every beam is a
level set.  The path cost g(v) is resolved lazily: a node stores only the
pair it added, and g is materialized by walking the parent chain through
the memoized oracle.  Deferred resolution is what lets the gated priority
of ``filter_beam`` actually skip oracle calls instead of reordering them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from speedup_search.ilp import (
    Assignment,
    CostOracle,
    Infeasible,
    ProblemInstance,
    partial_feasible,
)
from speedup_search.model import SpeedupModel

COST_ONLY = "cost_only"
HEURISTIC_ONLY = "heuristic_only"
FULL = "full"
GATED = "gated"
MODES = (COST_ONLY, HEURISTIC_ONLY, FULL, GATED)


class DepthMismatch(Exception):
    """Beam nodes disagree on depth; levels would no longer align."""


class FeatureExtractor:
    """Incremental speedup-feature map over partial assignments.

    Subclasses implement ``delta``: the feature change from assigning label
    ``i`` to variable ``k`` on top of ``assigned``.  ``extract`` folds deltas
    and serves as the from-scratch reference.
    """

    def delta(self, assigned: Mapping[int, int], k: int, i: int) -> dict[str, float]:
        raise NotImplementedError

    def extract(self, assigned: Mapping[int, int]) -> dict[str, float]:
        phi: dict[str, float] = {}
        seen: dict[int, int] = {}
        for k in sorted(assigned):
            for f, v in self.delta(seen, k, assigned[k]).items():
                phi[f] = phi.get(f, 0.0) + v
            seen[k] = assigned[k]
        return {f: v for f, v in phi.items() if v != 0.0}


class NullExtractor(FeatureExtractor):
    """Zero feature map, for cost-only searches."""

    def delta(self, assigned, k, i):
        return {}


class SearchNode:
    """A partial assignment with cached features and lazily resolved path cost."""

    __slots__ = ("assigned", "depth", "phi", "parent", "new_pair", "g_value")

    def __init__(self, assigned, depth, phi, parent=None, new_pair=None, g_value=None):
        self.assigned: dict[int, int] = assigned
        self.depth: int = depth
        self.phi: dict[str, float] = phi
        self.parent: Optional[SearchNode] = parent
        self.new_pair: Optional[tuple[int, int]] = new_pair
        self.g_value: Optional[float] = g_value

    @classmethod
    def root(cls) -> "SearchNode":
        return cls(assigned={}, depth=0, phi={}, g_value=0.0)

    def extend(self, k: int, i: int, extractor: FeatureExtractor) -> "SearchNode":
        phi = dict(self.phi)
        for f, v in extractor.delta(self.assigned, k, i).items():
            nv = phi.get(f, 0.0) + v
            if nv == 0.0:
                phi.pop(f, None)
            else:
                phi[f] = nv
        assigned = dict(self.assigned)
        assigned[k] = i
        return SearchNode(assigned, self.depth + 1, phi, parent=self, new_pair=(k, i))

    def path(self) -> tuple[int, ...]:
        """Label sequence in assignment order; the deterministic tie-break key."""
        pairs = []
        node = self
        while node.new_pair is not None:
            pairs.append(node.new_pair[1])
            node = node.parent
        return tuple(reversed(pairs))

    def g(self, oracle: CostOracle) -> float:
        """Resolve the path cost, memoizing along the parent chain."""
        if self.g_value is None:
            if self.new_pair is None:
                # Synthetic node (no parent chain): resolve from the assignment.
                self.g_value = sum(oracle.cost(k, i) for k, i in self.assigned.items())
            else:
                k, i = self.new_pair
                self.g_value = self.parent.g(oracle) + oracle.cost(k, i)
        return self.g_value

    def g_resolved(self) -> bool:
        return self.g_value is not None

    def assignment(self) -> Assignment:
        return Assignment(self.assigned)


@dataclass
class Beam:
    """Ordered node sequence, best first, at most ``width`` long."""

    nodes: tuple[SearchNode, ...]
    width: int

    @property
    def top(self) -> SearchNode:
        return self.nodes[0]


@dataclass
class PriorityConfig:
    """Which priority function ``filter_beam`` ranks candidates by."""

    model: SpeedupModel
    mode: str = FULL
    theta: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == GATED:
            if self.theta is None or self.theta < 0:
                raise ValueError("gated mode needs theta >= 0")


def breadth_expand(
    instance: ProblemInstance,
    beam: Beam,
    ordering: Sequence[int],
    extractor: FeatureExtractor,
) -> list[SearchNode]:
    """All one-variable extensions of the beam on the next variable in ``ordering``."""
    depths = {node.depth for node in beam.nodes}
    if len(depths) != 1:
        raise DepthMismatch(f"beam holds nodes at depths {sorted(depths)}")
    depth = depths.pop()
    if depth >= len(ordering):
        raise DepthMismatch("beam is already at goal depth")
    k = ordering[depth]
    return [
        node.extend(k, i, extractor)
        for node in beam.nodes
        for i in range(1, instance.arity(k) + 1)
    ]


def heuristic_gap(
    candidates: Sequence[SearchNode], model: SpeedupModel, width: int
) -> float:
    """h(v_{b+1}) - h(v_b) on the h-sorted candidates; +inf when |C| <= b."""
    if len(candidates) <= width:
        return math.inf
    hs = sorted(model.h(node.phi) for node in candidates)
    return hs[width] - hs[width - 1]


def path_cost_gap(candidates: Sequence[SearchNode], oracle: CostOracle) -> float:
    """Spread max g - min g over the candidates; forces g resolution."""
    gs = [node.g(oracle) for node in candidates]
    return max(gs) - min(gs) if gs else 0.0


@dataclass
class FilterRecord:
    delta: float = math.nan
    gate_taken: bool = False
    mode_used: str = FULL
    n_candidates: int = 0


def filter_beam(
    candidates: Sequence[SearchNode],
    config: PriorityConfig,
    width: int,
    oracle: CostOracle,
) -> tuple[Beam, FilterRecord]:
    """Take the top ``width`` candidates under the configured priority.

    ``gated`` ranks by the heuristic alone whenever the heuristic gap
    exceeds theta, leaving survivor path costs deferred; otherwise it
    resolves g for every candidate and falls back to the full priority.
    A zero gap never fires the gate (the equivalence guarantee needs a
    strict gap).  Ties everywhere break on the lexicographic label path.
    """
    if not candidates:
        raise ValueError("no candidates to filter")
    record = FilterRecord(n_candidates=len(candidates))
    model = config.model
    mode = config.mode
    if mode == GATED:
        record.delta = heuristic_gap(candidates, model, width)
        if record.delta > config.theta:
            record.gate_taken = True
            mode = HEURISTIC_ONLY
        else:
            mode = FULL
    record.mode_used = mode

    if mode == COST_ONLY:
        key = lambda node: (node.g(oracle), node.path())
    elif mode == HEURISTIC_ONLY:
        key = lambda node: (model.h(node.phi), node.path())
    else:
        key = lambda node: (node.g(oracle) + model.h(node.phi), node.path())
    ranked = sorted(candidates, key=key)
    return Beam(nodes=tuple(ranked[:width]), width=width), record


@dataclass
class StepRecord:
    step: int
    delta: float
    gate_taken: bool
    mode_used: str
    n_candidates: int
    beam_size: int
    oracle_calls: int


@dataclass
class SearchOutcome:
    assignment: Assignment
    trace: list[StepRecord]
    final_beam: Beam


def beam_search(
    instance: ProblemInstance,
    config: PriorityConfig,
    width: int,
    extractor: FeatureExtractor,
    ordering: Optional[Sequence[int]] = None,
) -> SearchOutcome:
    """Run the breadth-expand / filter loop to goal depth K."""
    if width < 1:
        raise ValueError("width must be >= 1")
    if ordering is None:
        ordering = list(range(1, instance.n_variables + 1))
    beam = Beam(nodes=(SearchNode.root(),), width=width)
    trace: list[StepRecord] = []
    for step in range(instance.n_variables):
        candidates = breadth_expand(instance, beam, ordering, extractor)
        beam, rec = filter_beam(candidates, config, width, instance.oracle)
        trace.append(
            StepRecord(
                step=step,
                delta=rec.delta,
                gate_taken=rec.gate_taken,
                mode_used=rec.mode_used,
                n_candidates=rec.n_candidates,
                beam_size=len(beam.nodes),
                oracle_calls=instance.oracle.call_count,
            )
        )
    return SearchOutcome(assignment=beam.top.assignment(), trace=trace, final_beam=beam)


def trace_lines(trace: Sequence[StepRecord]) -> list[str]:
    """Line-delimited trace export for the evaluation harness."""
    return [
        f"step={r.step} delta={r.delta!r} gate_taken={int(r.gate_taken)} "
        f"mode={r.mode_used} candidates={r.n_candidates} beam={r.beam_size} "
        f"oracle_calls={r.oracle_calls}"
        for r in trace
    ]


def unconstrained_greedy(instance: ProblemInstance) -> Assignment:
    """Independent per-variable argmin of the raw costs, smallest label on ties."""
    labels = {}
    for k in range(1, instance.n_variables + 1):
        best_i, best_c = 1, instance.oracle.cost(k, 1)
        for i in range(2, instance.arity(k) + 1):
            c = instance.oracle.cost(k, i)
            if c < best_c:
                best_i, best_c = i, c
        labels[k] = best_i
    return Assignment(labels)


def constrained_greedy(
    instance: ProblemInstance, ordering: Optional[Sequence[int]] = None
) -> Assignment:
    """Greedy search that keeps every step completable to a feasible structure.

    At each step the cheapest label whose extension still admits a feasible
    completion is taken, so the result always satisfies every row.
    """
    if ordering is None:
        ordering = list(range(1, instance.n_variables + 1))
    current = Assignment()
    if not partial_feasible(instance, current):
        raise Infeasible("instance has no feasible structure")
    for k in ordering:
        ranked = sorted(
            ((instance.oracle.cost(k, i), i) for i in range(1, instance.arity(k) + 1))
        )
        for _, i in ranked:
            candidate = current.extended(k, i)
            if partial_feasible(instance, candidate):
                current = candidate
                break
        else:
            raise Infeasible(f"no completable label for variable {k}")
    return current
