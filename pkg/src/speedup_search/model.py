"""Sparse linear speedup model: h(v) = -w . phi(v)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping


class ModelSchemaError(Exception):
    """Model file declares a feature schema this code does not understand."""


def sparse_dot(weights: Mapping[str, float], phi: Mapping[str, float]) -> float:
    if len(phi) > len(weights):
        weights, phi = phi, weights
    return sum(weights.get(f, 0.0) * v for f, v in phi.items())


@dataclass
class SpeedupModel:
    """Weight vector over speedup features, trained online by imitation.

    ``update_count`` totals the perceptron-style weight updates and equals
    the sum of ``epoch_log``.
    """

    weights: dict[str, float] = field(default_factory=dict)
    update_count: int = 0
    epoch_log: list[int] = field(default_factory=list)
    schema: str = "er-pair-triple/v1"

    def score(self, phi: Mapping[str, float]) -> float:
        return sparse_dot(self.weights, phi)

    def h(self, phi: Mapping[str, float]) -> float:
        """Heuristic value of a node with feature vector phi."""
        return -self.score(phi)

    def add_scaled(self, phi: Mapping[str, float], scale: float) -> None:
        for f, v in phi.items():
            w = self.weights.get(f, 0.0) + scale * v
            if w == 0.0:
                self.weights.pop(f, None)
            else:
                self.weights[f] = w

    def save(self, path) -> None:
        lines = [f"# schema: {self.schema}", f"# updates: {self.update_count}"]
        for feature in sorted(self.weights):
            lines.append(f"{feature}\t{self.weights[feature]!r}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path, expected_schema: str = "er-pair-triple/v1") -> "SpeedupModel":
        with open(path) as fh:
            lines = [line.rstrip("\n") for line in fh if line.strip()]
        if not lines or not lines[0].startswith("# schema: "):
            raise ModelSchemaError(f"{path}: missing schema header")
        schema = lines[0][len("# schema: "):]
        if schema != expected_schema:
            raise ModelSchemaError(
                f"{path}: schema {schema!r} does not match expected {expected_schema!r}"
            )
        updates = 0
        weights = {}
        for line in lines[1:]:
            if line.startswith("# updates: "):
                updates = int(line[len("# updates: "):])
                continue
            feature, value = line.split("\t")
            weights[feature] = float(value)
        return cls(weights=weights, update_count=updates, schema=schema)
