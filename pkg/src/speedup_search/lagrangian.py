"""Lagrangian dual of the inference ILP and the dual-derived optimal heuristic.

The structural rows are dualized with multipliers u, giving

    L(z, u) = sum c[k,i] z[k,i] - sum_j u_j (sum A[j] z - b_j)

whose minimizer over the unique-label domain decomposes per variable.
Maximizing theta(u) = min_z L(z, u) by projected subgradient ascent yields
a certificate u*; when the duality gap is zero, greedy search under
p(v) = g(v) + h*(v) with h*(v) = -sum_{(k,i) in v} sum_j A[k,j,i] u*_j
recovers the exact primal optimum.  Multipliers of <= rows live in the
nonpositive cone and those of >= rows in the nonnegative cone, which is
what keeps theta(u) a lower bound for the minimization primal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from speedup_search.ilp import Assignment, ProblemInstance
from speedup_search.model import SpeedupModel
from speedup_search.search import FeatureExtractor


@dataclass
class DualState:
    """Multipliers, best dual value seen and the ascent bookkeeping."""

    u: np.ndarray
    dual_value: float
    iterations: int
    converged: bool
    eta0: float = 1.0
    decay: str = "1/sqrt(t)"


def _cost_matrix(instance: ProblemInstance) -> list[list[float]]:
    return [
        [instance.oracle.cost(k, i) for i in range(1, instance.arity(k) + 1)]
        for k in range(1, instance.n_variables + 1)
    ]


def _reduced_costs(instance, costs, u: np.ndarray) -> list[list[float]]:
    reduced = [row[:] for row in costs]
    for j, constraint in enumerate(instance.constraints.rows):
        if u[j] == 0.0:
            continue
        for k, i, a in constraint.coeffs:
            reduced[k - 1][i - 1] -= u[j] * a
    return reduced


def dual_minimizer(
    instance: ProblemInstance, u: np.ndarray
) -> tuple[Assignment, float]:
    """Minimize the relaxed objective L(z, u): per-variable argmin of reduced costs.

    Ties break toward the smallest label index.  The returned value includes
    the constant term sum_j b_j u_j.
    """
    costs = _cost_matrix(instance)
    reduced = _reduced_costs(instance, costs, u)
    labels = {}
    value = 0.0
    for k, row in enumerate(reduced, start=1):
        best_i = min(range(len(row)), key=lambda idx: (row[idx], idx))
        labels[k] = best_i + 1
        value += row[best_i]
    value += sum(
        float(u[j]) * constraint.rhs
        for j, constraint in enumerate(instance.constraints.rows)
    )
    return Assignment(labels), value


def solve_dual(
    instance: ProblemInstance,
    max_iters: int = 500,
    tol: float = 1e-7,
    eta0: float = 1.0,
    stall_window: int = 50,
) -> DualState:
    """Projected subgradient ascent on theta(u), tracking the best iterate.

    Step size eta0 / sqrt(t).  Convergence is reported (never raised) when
    the projected subgradient norm drops below ``tol`` or the best value
    stalls for ``stall_window`` iterations.
    """
    m = len(instance.constraints.rows)
    if m == 0:
        _, value = dual_minimizer(instance, np.zeros(0))
        return DualState(
            u=np.zeros(0), dual_value=value, iterations=0, converged=True, eta0=eta0
        )
    senses = [row.sense for row in instance.constraints.rows]
    u = np.zeros(m)
    best_u = u.copy()
    best_value = -math.inf
    last_improvement = 0
    converged = False
    t = 0
    for t in range(1, max_iters + 1):
        z, value = dual_minimizer(instance, u)
        if value > best_value:
            best_value = value
            best_u = u.copy()
            last_improvement = t
        grad = np.array(
            [
                row.rhs - row.value(z.labels)
                for row in instance.constraints.rows
            ]
        )
        step = eta0 / math.sqrt(t)
        u = u + step * grad
        for j, sense in enumerate(senses):
            if sense == "<=" and u[j] > 0.0:
                u[j] = 0.0
            elif sense == ">=" and u[j] < 0.0:
                u[j] = 0.0
        # Projected subgradient: components pushing out of the sign cone are inactive.
        proj = grad.copy()
        for j, sense in enumerate(senses):
            if sense == "<=" and u[j] == 0.0 and grad[j] > 0.0:
                proj[j] = 0.0
            elif sense == ">=" and u[j] == 0.0 and grad[j] < 0.0:
                proj[j] = 0.0
        if float(np.linalg.norm(proj)) < tol:
            z, value = dual_minimizer(instance, u)
            if value > best_value:
                best_value, best_u = value, u.copy()
            converged = True
            break
        if t - last_improvement >= stall_window:
            converged = True
            break
    return DualState(
        u=best_u, dual_value=best_value, iterations=t, converged=converged, eta0=eta0
    )


def optimal_heuristic_features(
    instance: ProblemInstance, dual: DualState, assigned: Mapping[int, int]
) -> tuple[dict[tuple[int, int, int], float], dict[tuple[int, int, int], float]]:
    """Explicit (phi, w) pair whose negated dot product is the optimal heuristic.

    phi[k, i, j] = u_j for every assigned pair (k, i) and every row j that
    involves it; w[k, i, j] = A[k, j, i].  Entries where A is zero carry no
    information and are omitted from both vectors.
    """
    phi: dict[tuple[int, int, int], float] = {}
    w: dict[tuple[int, int, int], float] = {}
    for j, row in enumerate(instance.constraints.rows):
        for k, i, a in row.coeffs:
            key = (k, i, j)
            w[key] = w.get(key, 0.0) + a
            if assigned.get(k) == i:
                phi[key] = float(dual.u[j])
    return phi, w


def dual_heuristic(instance: ProblemInstance, dual: DualState, assigned) -> float:
    """h*(v) = -(w . phi) for the node's assigned pairs."""
    phi, w = optimal_heuristic_features(instance, dual, assigned)
    return -sum(w[key] * value for key, value in phi.items())


class DualFeatureExtractor(FeatureExtractor):
    """Node features realizing the optimal heuristic inside the beam engine."""

    def __init__(self, instance: ProblemInstance, dual: DualState):
        self._by_pair: dict[tuple[int, int], list[tuple[int, float]]] = {}
        for j, row in enumerate(instance.constraints.rows):
            for k, i, a in row.coeffs:
                if a != 0.0:
                    self._by_pair.setdefault((k, i), []).append((j, float(dual.u[j])))

    def delta(self, assigned, k, i):
        return {f"dual:{k}:{i}:{j}": uj for j, uj in self._by_pair.get((k, i), [])}


def dual_search_model(
    instance: ProblemInstance, dual: DualState
) -> tuple[SpeedupModel, DualFeatureExtractor]:
    """Model + extractor so that beam search under p = g + h* is a plain search run."""
    weights: dict[str, float] = {}
    for j, row in enumerate(instance.constraints.rows):
        for k, i, a in row.coeffs:
            key = f"dual:{k}:{i}:{j}"
            weights[key] = weights.get(key, 0.0) + a
    model = SpeedupModel(weights=weights, schema="dual/v1")
    return model, DualFeatureExtractor(instance, dual)
