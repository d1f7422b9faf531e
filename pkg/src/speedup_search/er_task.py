"""Entity-relation instantiation: labels, constraint rows, features, generators.

The task labels E entity candidates and the E*(E-1) directed relations
between them.  Structural rows encode the argument-type rule of each
relation plus the at-most-one-direction rule per entity pair.  Speedup
features are counts of (source label, relation label), (relation label,
target label) and (source, relation, target) sub-structures; a feature
fires only once all of its constituents are assigned, which keeps the map
additive along any search path.

Real-text ingestion is replaced by a seeded synthetic generator with a
planted gold structure and calibrated difficulty.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from speedup_search.ilp import (
    Assignment,
    ConstraintSystem,
    CostOracle,
    ProblemInstance,
    Row,
    VariableSpec,
    check_feasible,
    solve_exact,
)
from speedup_search.search import FeatureExtractor

ENTITY_LABELS = ("person", "location", "organization", "NoEnt")
RELATION_LABELS = ("Kill", "LiveIn", "WorkFor", "LocatedAt", "OrgBasedIn", "NoRel")

# Allowed (source, target) entity types per relation; NoRel is unrestricted.
TYPE_RULES = {
    "Kill": ("person", "person"),
    "LiveIn": ("person", "location"),
    "WorkFor": ("person", "organization"),
    "LocatedAt": ("location", "location"),
    "OrgBasedIn": ("organization", "location"),
}

NO_ENT = ENTITY_LABELS.index("NoEnt") + 1
NO_REL = RELATION_LABELS.index("NoRel") + 1


class CalibrationFailed(Exception):
    """The generator could not certify the requested property."""


@dataclass(frozen=True)
class ERSchema:
    entity_labels: tuple[str, ...] = ENTITY_LABELS
    relation_labels: tuple[str, ...] = RELATION_LABELS
    type_rules: Mapping[str, tuple[str, str]] = field(
        default_factory=lambda: dict(TYPE_RULES)
    )


class ERLayout:
    """Variable layout: E entity variables, then one variable per ordered pair."""

    def __init__(self, entity_count: int, schema: Optional[ERSchema] = None):
        if entity_count < 2:
            raise ValueError("need at least two entities")
        self.schema = schema or ERSchema()
        self.entity_count = entity_count
        self.pairs: list[tuple[int, int]] = [
            (a, b)
            for a in range(1, entity_count + 1)
            for b in range(1, entity_count + 1)
            if a != b
        ]
        self.pair_var: dict[tuple[int, int], int] = {
            pair: entity_count + 1 + idx for idx, pair in enumerate(self.pairs)
        }

    @property
    def n_variables(self) -> int:
        return self.entity_count + len(self.pairs)

    @classmethod
    def from_variable_count(cls, n_variables: int) -> "ERLayout":
        # K = E + E(E-1) = E^2
        e = int(round(math.sqrt(n_variables)))
        if e * e != n_variables or e < 2:
            raise ValueError(f"{n_variables} variables is not an ER layout")
        return cls(e)

    def is_entity(self, k: int) -> bool:
        return k <= self.entity_count

    def endpoints(self, k: int) -> tuple[int, int]:
        return self.pairs[k - self.entity_count - 1]

    def variable_specs(self) -> tuple[VariableSpec, ...]:
        specs = [
            VariableSpec(index=a, arity=len(self.schema.entity_labels),
                         label_names=self.schema.entity_labels)
            for a in range(1, self.entity_count + 1)
        ]
        for (a, b), k in sorted(self.pair_var.items(), key=lambda kv: kv[1]):
            specs.append(
                VariableSpec(index=k, arity=len(self.schema.relation_labels),
                             label_names=self.schema.relation_labels)
            )
        return tuple(specs)

    def constraint_rows(self) -> ConstraintSystem:
        """Typed-argument rows per relation plus one NoRel row per unordered pair."""
        ent = {name: i + 1 for i, name in enumerate(self.schema.entity_labels)}
        rel = {name: i + 1 for i, name in enumerate(self.schema.relation_labels)}
        rows: list[Row] = []
        for (a, b), k in sorted(self.pair_var.items(), key=lambda kv: kv[1]):
            for name, (src_type, tgt_type) in self.schema.type_rules.items():
                r = rel[name]
                rows.append(Row(((k, r, 1.0), (a, ent[src_type], -1.0)), 0.0, "<="))
                rows.append(Row(((k, r, 1.0), (b, ent[tgt_type], -1.0)), 0.0, "<="))
        for a in range(1, self.entity_count + 1):
            for b in range(a + 1, self.entity_count + 1):
                rows.append(
                    Row(
                        ((self.pair_var[(a, b)], rel["NoRel"], 1.0),
                         (self.pair_var[(b, a)], rel["NoRel"], 1.0)),
                        1.0,
                        ">=",
                    )
                )
        return ConstraintSystem(tuple(rows))


def pair_src_feature(src: str, rel: str) -> str:
    return f"pair:src={src}|rel={rel}"


def pair_tgt_feature(rel: str, tgt: str) -> str:
    return f"pair:rel={rel}|tgt={tgt}"


def triple_feature(src: str, rel: str, tgt: str) -> str:
    return f"triple:src={src}|rel={rel}|tgt={tgt}"


def all_feature_ids(schema: Optional[ERSchema] = None) -> list[str]:
    schema = schema or ERSchema()
    ids = []
    for rel in schema.relation_labels:
        for ent in schema.entity_labels:
            ids.append(pair_src_feature(ent, rel))
            ids.append(pair_tgt_feature(rel, ent))
        for src in schema.entity_labels:
            for tgt in schema.entity_labels:
                ids.append(triple_feature(src, rel, tgt))
    return ids


class ERFeatureExtractor(FeatureExtractor):
    """Counts of assigned (src, rel), (rel, tgt) and (src, rel, tgt) sub-structures."""

    def __init__(self, layout: ERLayout):
        self.layout = layout

    def delta(self, assigned: Mapping[int, int], k: int, i: int) -> dict[str, float]:
        layout = self.layout
        ents = layout.schema.entity_labels
        rels = layout.schema.relation_labels
        phi: dict[str, float] = {}

        def bump(f: str) -> None:
            phi[f] = phi.get(f, 0.0) + 1.0

        if layout.is_entity(k):
            ent_name = ents[i - 1]
            for (a, b), kr in layout.pair_var.items():
                ri = assigned.get(kr)
                if ri is None:
                    continue
                rel_name = rels[ri - 1]
                if a == k:
                    bump(pair_src_feature(ent_name, rel_name))
                    other = assigned.get(b)
                    if other is not None:
                        bump(triple_feature(ent_name, rel_name, ents[other - 1]))
                if b == k:
                    bump(pair_tgt_feature(rel_name, ent_name))
                    other = assigned.get(a)
                    if other is not None:
                        bump(triple_feature(ents[other - 1], rel_name, ent_name))
        else:
            a, b = layout.endpoints(k)
            rel_name = rels[i - 1]
            src = assigned.get(a)
            tgt = assigned.get(b)
            if src is not None:
                bump(pair_src_feature(ents[src - 1], rel_name))
            if tgt is not None:
                bump(pair_tgt_feature(rel_name, ents[tgt - 1]))
            if src is not None and tgt is not None:
                bump(triple_feature(ents[src - 1], rel_name, ents[tgt - 1]))
        return phi


def extract_features(layout: ERLayout, assigned: Mapping[int, int]) -> dict[str, float]:
    return ERFeatureExtractor(layout).extract(assigned)


def structure_valid(layout: ERLayout, a: Assignment) -> bool:
    """Rule-based validity check, independent of the row encoding."""
    ents = layout.schema.entity_labels
    rels = layout.schema.relation_labels
    for (x, y), k in layout.pair_var.items():
        rel_name = rels[a.labels[k] - 1]
        if rel_name == "NoRel":
            continue
        src_type, tgt_type = layout.schema.type_rules[rel_name]
        if ents[a.labels[x] - 1] != src_type or ents[a.labels[y] - 1] != tgt_type:
            return False
    for x in range(1, layout.entity_count + 1):
        for y in range(x + 1, layout.entity_count + 1):
            fwd = rels[a.labels[layout.pair_var[(x, y)]] - 1]
            bwd = rels[a.labels[layout.pair_var[(y, x)]] - 1]
            if fwd != "NoRel" and bwd != "NoRel":
                return False
    return True


@dataclass(frozen=True)
class DifficultyProfile:
    """Knobs controlling how often the unconstrained argmin is invalid."""

    name: str
    tension: float          # per ordered pair: plant a cheap type-violating label
    rel_prob: float = 0.55  # per unordered pair: gold carries a typed relation
    noent_prob: float = 0.25
    entity_low: float = -1.1   # non-gold entity costs ~ U(entity_low, 1.0)
    rel_low: float = -1.1      # non-gold relation costs ~ U(rel_low, 1.0)
    contested: float = 0.0     # per typed-gold pair: NoRel cost contests the gold
    contested_amp: float = 4.0


PROFILES = {
    "easy": DifficultyProfile("easy", tension=0.1),
    "medium": DifficultyProfile("medium", tension=0.35),
    "hard": DifficultyProfile("hard", tension=0.65, contested=0.5),
}


@dataclass
class ERInstance:
    """One generated problem plus its layout and optional separability certificate."""

    problem: ProblemInstance
    layout: ERLayout
    difficulty: str = "medium"
    separable: bool = False
    planted_direction: Optional[dict[str, float]] = None

    @property
    def entity_count(self) -> int:
        return self.layout.entity_count


def _sample_gold(layout: ERLayout, profile: DifficultyProfile, rng) -> dict[int, int]:
    ents = layout.schema.entity_labels
    rels = layout.schema.relation_labels
    rel_index = {name: i + 1 for i, name in enumerate(rels)}
    gold: dict[int, int] = {}
    for a in range(1, layout.entity_count + 1):
        if rng.random() < profile.noent_prob:
            gold[a] = NO_ENT
        else:
            gold[a] = int(rng.integers(1, len(ents)))  # 1..3, never NoEnt
    for k in layout.pair_var.values():
        gold[k] = NO_REL
    for a in range(1, layout.entity_count + 1):
        for b in range(a + 1, layout.entity_count + 1):
            options = []
            for x, y in ((a, b), (b, a)):
                src, tgt = ents[gold[x] - 1], ents[gold[y] - 1]
                for name, rule in layout.schema.type_rules.items():
                    if rule == (src, tgt):
                        options.append((layout.pair_var[(x, y)], rel_index[name]))
            if options and rng.random() < profile.rel_prob:
                k, r = options[int(rng.integers(0, len(options)))]
                gold[k] = r
    return gold


def build_instance(
    entity_count: int,
    rng: np.random.Generator,
    difficulty: str | DifficultyProfile = "medium",
) -> ERInstance:
    """Instance with a feasible planted gold and profile-calibrated cost noise.

    Costs reward the gold label and add label-confusion noise; with
    probability ``tension`` per directed pair, a type-violating relation
    label (judged against the per-variable entity argmins) is made strictly
    cheapest so the unconstrained argmin breaks a constraint.
    """
    if not 2 <= entity_count <= 6:
        raise ValueError("entity_count must be in 2..6")
    profile = PROFILES[difficulty] if isinstance(difficulty, str) else difficulty
    layout = ERLayout(entity_count)
    ents = layout.schema.entity_labels
    rels = layout.schema.relation_labels
    gold = _sample_gold(layout, profile, rng)

    costs: list[list[float]] = []
    for a in range(1, layout.entity_count + 1):
        row = [rng.uniform(profile.entity_low, 1.0) for _ in ents]
        row[gold[a] - 1] = -(1.0 + rng.uniform(0.0, 0.5))
        costs.append(row)
    ent_argmin = [min(range(len(row)), key=lambda j: (row[j], j)) + 1 for row in costs]
    for (a, b), k in sorted(layout.pair_var.items(), key=lambda kv: kv[1]):
        row = [rng.uniform(profile.rel_low, 1.0) for _ in rels]
        row[gold[k] - 1] = -(1.0 + rng.uniform(0.0, 0.5))
        if gold[k] != NO_REL and rng.random() < profile.contested:
            # A cost-driven contest between two feasible choices: the solver's
            # pick depends on the draw, so no fixed label preference wins here.
            amp = profile.contested_amp
            row[gold[k] - 1] = -rng.uniform(0.0, amp)
            row[NO_REL - 1] = -rng.uniform(0.0, amp)
        if rng.random() < profile.tension:
            src, tgt = ents[ent_argmin[a - 1] - 1], ents[ent_argmin[b - 1] - 1]
            violating = [
                i + 1
                for i, name in enumerate(rels)
                if name != "NoRel"
                and i + 1 != gold[k]
                and layout.schema.type_rules[name] != (src, tgt)
            ]
            if violating:
                i = violating[int(rng.integers(0, len(violating)))]
                row[i - 1] = min(row) - rng.uniform(0.1, 0.6)
        costs.append(row)

    table = tuple(tuple(row) for row in costs)
    oracle = CostOracle(lambda k, i: table[k - 1][i - 1])
    problem = ProblemInstance(
        variables=layout.variable_specs(),
        constraints=layout.constraint_rows(),
        oracle=oracle,
        gold=Assignment(gold),
    )
    assert check_feasible(problem, problem.gold), "generator planted an invalid gold"
    name = profile.name
    return ERInstance(problem=problem, layout=layout, difficulty=name)


def planted_direction(schema: Optional[ERSchema] = None) -> dict[str, float]:
    """Unit direction favoring the all-organization, all-NoRel structure."""
    schema = schema or ERSchema()
    good = {
        pair_src_feature("organization", "NoRel"),
        pair_tgt_feature("NoRel", "organization"),
        triple_feature("organization", "NoRel", "organization"),
    }
    raw = {f: (1.0 if f in good else -0.1) for f in all_feature_ids(schema)}
    norm = math.sqrt(sum(v * v for v in raw.values()))
    return {f: v / norm for f, v in raw.items()}


def certify_margin(layout: ERLayout, gold: Mapping[int, int], direction) -> float:
    """Exhaustive level margin of ``direction`` for the given reference.

    Enumerates every node at every level past the entity block and returns
    the minimum score gap between the reference prefix and any other node.
    Also verifies that entity-only levels carry no features at all (so no
    update can ever hinge on them).  Desk-scale only: entity_count == 2.
    """
    if layout.entity_count != 2:
        raise ValueError("exhaustive certification supports entity_count == 2 only")
    import itertools

    extractor = ERFeatureExtractor(layout)
    K = layout.n_variables
    arities = [
        len(layout.schema.entity_labels) if layout.is_entity(k)
        else len(layout.schema.relation_labels)
        for k in range(1, K + 1)
    ]
    for level in range(1, layout.entity_count + 1):
        for combo in itertools.product(*(range(1, a + 1) for a in arities[:level])):
            assigned = {k + 1: i for k, i in enumerate(combo)}
            if extractor.extract(assigned):
                raise CalibrationFailed("entity-only level fired a feature")

    def score(assigned) -> float:
        return sum(direction.get(f, 0.0) * v
                   for f, v in extractor.extract(assigned).items())

    margin = math.inf
    for level in range(layout.entity_count + 1, K + 1):
        good = {k: gold[k] for k in range(1, level + 1)}
        good_score = score(good)
        for combo in itertools.product(*(range(1, a + 1) for a in arities[:level])):
            assigned = {k + 1: i for k, i in enumerate(combo)}
            if all(assigned[k] == gold[k] for k in assigned):
                continue
            margin = min(margin, good_score - score(assigned))
    return margin


@dataclass
class PlantedSet:
    instances: list[ERInstance]
    direction: dict[str, float]
    certified_margin: float


def plant_separable_set(
    count: int,
    entity_count: int,
    margin_target: float,
    rng: np.random.Generator,
) -> PlantedSet:
    """Instances whose reference solutions are level-separable by one direction.

    Every instance plants the same all-organization, all-NoRel reference,
    makes gold entity labels dominant enough that the exact solver provably
    returns the reference, and leaves relation costs noisy so search makes
    correctable mistakes.  The shared direction's level margin is certified
    by exhaustive enumeration.
    """
    if margin_target <= 0:
        raise ValueError("margin_target must be positive")
    layout = ERLayout(entity_count)
    direction = planted_direction(layout.schema)
    org = ENTITY_LABELS.index("organization") + 1
    gold = {a: org for a in range(1, entity_count + 1)}
    for k in layout.pair_var.values():
        gold[k] = NO_REL

    margin = certify_margin(layout, gold, direction)
    if margin < margin_target:
        raise CalibrationFailed(
            f"certified margin {margin:.4f} below target {margin_target}"
        )

    instances: list[ERInstance] = []
    for _ in range(count):
        costs: list[list[float]] = []
        for a in range(1, entity_count + 1):
            row = [rng.uniform(0.0, 1.0) for _ in ENTITY_LABELS]
            row[org - 1] = -(10.0 + rng.uniform(0.0, 1.0))
            costs.append(row)
        for k in sorted(layout.pair_var.values()):
            row = [rng.uniform(-1.5, 1.0) for _ in RELATION_LABELS]
            row[NO_REL - 1] = rng.uniform(-1.0, 0.0)
            costs.append(row)
        table = tuple(tuple(row) for row in costs)
        oracle = CostOracle(lambda k, i, t=table: t[k - 1][i - 1])
        problem = ProblemInstance(
            variables=layout.variable_specs(),
            constraints=layout.constraint_rows(),
            oracle=oracle,
            gold=Assignment(gold),
        )
        for a in range(1, entity_count + 1):
            others = [c for idx, c in enumerate(costs[a - 1]) if idx != org - 1]
            if costs[a - 1][org - 1] >= min(others):
                raise CalibrationFailed("gold entity label is not strictly cheapest")
        result = solve_exact(problem.clone_fresh())
        if result.assignment.labels != gold:
            raise CalibrationFailed("exact solver disagrees with the planted reference")
        instances.append(
            ERInstance(
                problem=problem,
                layout=layout,
                difficulty="separable",
                separable=True,
                planted_direction=direction,
            )
        )
    return PlantedSet(instances=instances, direction=direction, certified_margin=margin)
