"""0-1 ILP view of structured inference over categorical variables.

An inference problem assigns one of ``arity(k)`` labels to each of K
categorical variables.  Costs decompose per (variable, label) pair and are
served by a lazy, memoized oracle.  Structural constraints are linear rows
over the 0-1 indicators z[k, i] ("variable k takes label i").  The exact
solver is a depth-first branch-and-bound with interval-based constraint
propagation; it is the black-box reference that the speedup classifier
learns to imitate.

Variable indices k and label indices i are 1-based throughout.
"""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional


class Infeasible(Exception):
    """No complete assignment satisfies every constraint row."""


class BudgetExhausted(Exception):
    """Node-expansion budget was hit before optimality was proven."""


class IncompleteAssignment(Exception):
    """Operation requires a complete assignment but got a partial one."""


SENSES = ("=", "<=", ">=")


@dataclass(frozen=True)
class VariableSpec:
    """One categorical variable: 1-based index, label count and display names."""

    index: int
    arity: int
    label_names: tuple[str, ...]

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"variable index must be >= 1, got {self.index}")
        if self.arity < 1:
            raise ValueError(f"arity must be >= 1, got {self.arity}")
        if len(self.label_names) != self.arity:
            raise ValueError(
                f"variable {self.index}: {len(self.label_names)} names for arity {self.arity}"
            )


class Assignment:
    """A partial or complete mapping variable-index -> label-index.

    Each variable appears at most once, which encodes the unique-label
    constraint structurally; it is never materialized as a row.
    """

    __slots__ = ("labels",)

    def __init__(self, labels: Optional[Mapping[int, int]] = None):
        self.labels: dict[int, int] = dict(labels) if labels else {}

    def assigned(self, k: int) -> bool:
        return k in self.labels

    def extended(self, k: int, i: int) -> "Assignment":
        if k in self.labels:
            raise ValueError(f"variable {k} already assigned")
        child = Assignment(self.labels)
        child.labels[k] = i
        return child

    def is_complete(self, n_variables: int) -> bool:
        return len(self.labels) == n_variables

    def path_tuple(self, n_variables: int) -> tuple[int, ...]:
        """Label vector in variable order; raises if partial."""
        if not self.is_complete(n_variables):
            raise IncompleteAssignment(
                f"{len(self.labels)} of {n_variables} variables assigned"
            )
        return tuple(self.labels[k] for k in range(1, n_variables + 1))

    def __eq__(self, other):
        return isinstance(other, Assignment) and self.labels == other.labels

    def __repr__(self):
        inner = ", ".join(f"{k}->{i}" for k, i in sorted(self.labels.items()))
        return f"Assignment({{{inner}}})"


class CostOracle:
    """Lazy, counted access to cost coefficients c[k, i].

    ``call_count`` counts distinct (k, i) pairs ever computed; repeated
    queries hit the memo and return bit-identical values.  ``lookup_count``
    counts every query, memoized or not, and is the work metric charged to
    the exact solver (each branch-and-bound expansion re-reads the
    coefficients it needs).  Memo and counters are lock-protected so that
    evaluation workers may share an instance.
    """

    def __init__(
        self,
        source: Callable[[int, int], float],
        simulated_latency: float = 0.0,
    ):
        self.source = source
        self.simulated_latency = simulated_latency
        self.call_count = 0
        self.lookup_count = 0
        self._memo: dict[tuple[int, int], float] = {}
        self._lock = threading.Lock()

    def cost(self, k: int, i: int) -> float:
        with self._lock:
            self.lookup_count += 1
            try:
                return self._memo[(k, i)]
            except KeyError:
                pass
            value = float(self.source(k, i))
            if self.simulated_latency > 0:
                time.sleep(self.simulated_latency)
            self._memo[(k, i)] = value
            self.call_count += 1
            return value


@dataclass(frozen=True)
class Row:
    """One linear constraint: sum of A[k,i] * z[k,i] (sense) rhs.

    ``coeffs`` is a sparse tuple of (k, i, coefficient) triples; indicator
    pairs not listed contribute zero.
    """

    coeffs: tuple[tuple[int, int, float], ...]
    rhs: float
    sense: str

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ValueError(f"unknown sense {self.sense!r}")

    def value(self, labels: Mapping[int, int]) -> float:
        return sum(c for k, i, c in self.coeffs if labels.get(k) == i)

    def holds(self, labels: Mapping[int, int]) -> bool:
        v = self.value(labels)
        if self.sense == "=":
            return v == self.rhs
        if self.sense == "<=":
            return v <= self.rhs
        return v >= self.rhs


@dataclass(frozen=True)
class ConstraintSystem:
    """The m structural rows; m = 0 is a valid unconstrained system."""

    rows: tuple[Row, ...] = ()

    def validate_indices(self, variables: tuple[VariableSpec, ...]) -> None:
        arities = {v.index: v.arity for v in variables}
        for j, row in enumerate(self.rows):
            for k, i, _ in row.coeffs:
                if k not in arities or not 1 <= i <= arities[k]:
                    raise ValueError(f"row {j} references invalid indicator ({k}, {i})")


class ProblemInstance:
    """One inference problem: variables, constraints, cost oracle, optional gold.

    Immutable after construction apart from the oracle memo and counters.
    ``gold`` must be a complete assignment within arity bounds; whether it
    satisfies the structural rows is the generator's concern.
    """

    def __init__(
        self,
        variables: Iterable[VariableSpec],
        constraints: ConstraintSystem,
        oracle: CostOracle,
        gold: Optional[Assignment] = None,
    ):
        self.variables = tuple(variables)
        if not self.variables:
            raise ValueError("need at least one variable")
        indices = [v.index for v in self.variables]
        if indices != list(range(1, len(indices) + 1)):
            raise ValueError("variable indices must be contiguous from 1")
        constraints.validate_indices(self.variables)
        self.constraints = constraints
        self.oracle = oracle
        if gold is not None:
            if not gold.is_complete(len(self.variables)):
                raise ValueError("gold assignment must be complete")
            for k, i in gold.labels.items():
                if not 1 <= i <= self.variables[k - 1].arity:
                    raise ValueError(f"gold label {i} out of range for variable {k}")
        self.gold = gold
        # Per-row (variable -> (min, max) contribution) tables for interval pruning.
        self._row_spans = tuple(_row_spans(row, self.variables) for row in constraints.rows)

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    def arity(self, k: int) -> int:
        return self.variables[k - 1].arity

    def clone_fresh(self) -> "ProblemInstance":
        """Same problem with a fresh oracle memo and counters."""
        oracle = CostOracle(self.oracle.source, self.oracle.simulated_latency)
        return ProblemInstance(self.variables, self.constraints, oracle, self.gold)


def _row_spans(row: Row, variables: tuple[VariableSpec, ...]):
    per_var: dict[int, dict[int, float]] = {}
    for k, i, c in row.coeffs:
        per_var.setdefault(k, {})[i] = per_var.setdefault(k, {}).get(i, 0.0) + c
    spans = {}
    for k, entries in per_var.items():
        arity = variables[k - 1].arity
        values = [entries.get(i, 0.0) for i in range(1, arity + 1)]
        spans[k] = (min(values), max(values))
    return spans


def rows_admit(instance: ProblemInstance, labels: Mapping[int, int]) -> bool:
    """Interval check: could some completion of ``labels`` satisfy every row?

    Necessary but not sufficient; used for pruning.  Unassigned variables
    contribute their per-row [min, max] span.
    """
    for row, spans in zip(instance.constraints.rows, instance._row_spans):
        lo = hi = 0.0
        for k, (smin, smax) in spans.items():
            i = labels.get(k)
            if i is None:
                lo += smin
                hi += smax
            else:
                c = 0.0
                for rk, ri, rc in row.coeffs:
                    if rk == k and ri == i:
                        c += rc
                lo += c
                hi += c
        if row.sense == "=" and not lo <= row.rhs <= hi:
            return False
        if row.sense == "<=" and lo > row.rhs:
            return False
        if row.sense == ">=" and hi < row.rhs:
            return False
    return True


def check_feasible(instance: ProblemInstance, a: Assignment) -> bool:
    """True iff the complete assignment satisfies every constraint row."""
    if not a.is_complete(instance.n_variables):
        raise IncompleteAssignment("check_feasible needs a complete assignment")
    return all(row.holds(a.labels) for row in instance.constraints.rows)


def partial_feasible(instance: ProblemInstance, a: Assignment) -> bool:
    """True iff some completion of ``a`` satisfies every row.

    Exact: backtracking over unassigned variables with interval pruning.
    """
    labels = dict(a.labels)
    unassigned = [k for k in range(1, instance.n_variables + 1) if k not in labels]

    def extend(pos: int) -> bool:
        if not rows_admit(instance, labels):
            return False
        if pos == len(unassigned):
            return True
        k = unassigned[pos]
        for i in range(1, instance.arity(k) + 1):
            labels[k] = i
            if extend(pos + 1):
                del labels[k]
                return True
            del labels[k]
        return False

    return extend(0)


def objective_of(instance: ProblemInstance, a: Assignment) -> float:
    """Sum of resolved cost coefficients of a complete assignment.

    Summation runs in variable-index order so that equal assignments always
    produce bit-identical objectives.
    """
    if not a.is_complete(instance.n_variables):
        raise IncompleteAssignment("objective_of needs a complete assignment")
    total = 0.0
    for k in range(1, instance.n_variables + 1):
        total += instance.oracle.cost(k, a.labels[k])
    return total


@dataclass
class SolveResult:
    assignment: Assignment
    objective: float
    expansions: int
    coefficient_lookups: int = 0


def solve_exact(instance: ProblemInstance, budget: int = 1_000_000) -> SolveResult:
    """Exact minimization of the 0-1 ILP by depth-first branch-and-bound.

    Variables are branched in index order, labels in ascending resolved-cost
    order; subtrees are pruned by interval constraint propagation and by an
    incumbent bound built from per-variable minima (re-read through the
    oracle at every expansion, which is the solver's charged work).  Ties in
    the objective are broken toward the lexicographically smallest label
    path, so repeated runs return identical assignments.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    K = instance.n_variables
    oracle = instance.oracle
    lookups_before = oracle.lookup_count

    best_obj: Optional[float] = None
    best_path: Optional[tuple[int, ...]] = None
    labels: dict[int, int] = {}
    expansions = 0

    def dfs(depth: int, g: float) -> None:
        nonlocal best_obj, best_path, expansions
        if depth == K:
            if all(row.holds(labels) for row in instance.constraints.rows):
                path = tuple(labels[k] for k in range(1, K + 1))
                if best_obj is None or g < best_obj or (g == best_obj and path < best_path):
                    best_obj, best_path = g, path
            return
        expansions += 1
        if expansions > budget:
            raise BudgetExhausted(f"expansion budget {budget} exhausted")
        k = depth + 1
        ranked = sorted(
            ((oracle.cost(k, i), i) for i in range(1, instance.arity(k) + 1))
        )
        rest = 0.0
        for k2 in range(k + 1, K + 1):
            rest += min(oracle.cost(k2, i) for i in range(1, instance.arity(k2) + 1))
        for cost, i in ranked:
            if best_obj is not None and g + cost + rest > best_obj:
                continue
            labels[k] = i
            if rows_admit(instance, labels):
                dfs(depth + 1, g + cost)
            del labels[k]

    dfs(0, 0.0)
    if best_path is None:
        raise Infeasible("no complete assignment satisfies the constraints")
    assignment = Assignment({k: i for k, i in zip(range(1, K + 1), best_path)})
    return SolveResult(
        assignment=assignment,
        objective=best_obj,
        expansions=expansions,
        coefficient_lookups=oracle.lookup_count - lookups_before,
    )
