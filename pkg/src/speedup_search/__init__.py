"""Structured-output inference with an exact ILP solver and a learned speedup heuristic."""

from speedup_search.ilp import (
    Assignment,
    BudgetExhausted,
    ConstraintSystem,
    CostOracle,
    IncompleteAssignment,
    Infeasible,
    ProblemInstance,
    Row,
    VariableSpec,
    check_feasible,
    objective_of,
    partial_feasible,
    solve_exact,
)
from speedup_search.model import SpeedupModel

__all__ = [
    "Assignment",
    "BudgetExhausted",
    "ConstraintSystem",
    "CostOracle",
    "IncompleteAssignment",
    "Infeasible",
    "ProblemInstance",
    "Row",
    "SpeedupModel",
    "VariableSpec",
    "check_feasible",
    "objective_of",
    "partial_feasible",
    "solve_exact",
]
