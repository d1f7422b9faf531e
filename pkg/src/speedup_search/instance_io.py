"""Plain-text round-trip format for problem instances and datasets.

Grammar (whitespace separated, one record per line):

    K m
    <K variable lines>   k arity name_1 ... name_arity
    <m row lines>        sense rhs nnz (k i coeff) * nnz
    <K cost lines>       costs k c_1 ... c_arity
    [gold line]          gold k:i ... (complete)

Floats are written with ``repr`` so loading reproduces them bit for bit.
Datasets are directories of numbered instance files plus a ``manifest.json``
with sorted keys and no timestamps, keeping exports byte-identical across
runs with the same seed.
"""
from __future__ import annotations

import json
import os
from typing import Optional

from speedup_search.ilp import (
    Assignment,
    ConstraintSystem,
    CostOracle,
    ProblemInstance,
    Row,
    VariableSpec,
)


class FormatError(Exception):
    """Instance file does not match the expected grammar."""


def dump_instance(instance: ProblemInstance, path) -> None:
    """Write the instance, reading costs straight from the oracle source.

    Bypasses the memo and counters so dumping never perturbs work metrics.
    """
    lines = [f"{instance.n_variables} {len(instance.constraints.rows)}"]
    for v in instance.variables:
        lines.append(f"{v.index} {v.arity} " + " ".join(v.label_names))
    for row in instance.constraints.rows:
        parts = [row.sense, repr(row.rhs), str(len(row.coeffs))]
        for k, i, c in row.coeffs:
            parts.extend((str(k), str(i), repr(c)))
        lines.append(" ".join(parts))
    for v in instance.variables:
        costs = " ".join(
            repr(float(instance.oracle.source(v.index, i)))
            for i in range(1, v.arity + 1)
        )
        lines.append(f"costs {v.index} {costs}")
    if instance.gold is not None:
        pairs = " ".join(
            f"{k}:{instance.gold.labels[k]}"
            for k in range(1, instance.n_variables + 1)
        )
        lines.append(f"gold {pairs}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_instance(path) -> ProblemInstance:
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise FormatError(f"{path}: empty file")
    try:
        K, m = (int(x) for x in lines[0].split())
    except ValueError as exc:
        raise FormatError(f"{path}: bad header {lines[0]!r}") from exc
    if len(lines) < 1 + K + m + K:
        raise FormatError(f"{path}: expected at least {1 + 2 * K + m} lines")

    variables = []
    for line in lines[1 : 1 + K]:
        parts = line.split()
        k, arity = int(parts[0]), int(parts[1])
        names = tuple(parts[2:])
        if len(names) != arity:
            raise FormatError(f"{path}: variable {k} lists {len(names)} names")
        variables.append(VariableSpec(index=k, arity=arity, label_names=names))

    rows = []
    for line in lines[1 + K : 1 + K + m]:
        parts = line.split()
        sense, rhs, nnz = parts[0], float(parts[1]), int(parts[2])
        flat = parts[3:]
        if len(flat) != 3 * nnz:
            raise FormatError(f"{path}: row {line!r} has wrong coefficient count")
        coeffs = tuple(
            (int(flat[3 * t]), int(flat[3 * t + 1]), float(flat[3 * t + 2]))
            for t in range(nnz)
        )
        rows.append(Row(coeffs=coeffs, rhs=rhs, sense=sense))

    table: dict[int, tuple[float, ...]] = {}
    for line in lines[1 + K + m : 1 + K + m + K]:
        parts = line.split()
        if parts[0] != "costs":
            raise FormatError(f"{path}: expected cost line, got {line!r}")
        k = int(parts[1])
        table[k] = tuple(float(x) for x in parts[2:])
    for v in variables:
        if len(table.get(v.index, ())) != v.arity:
            raise FormatError(f"{path}: cost line for variable {v.index} is off")

    gold: Optional[Assignment] = None
    rest = lines[1 + K + m + K :]
    if rest:
        parts = rest[0].split()
        if parts[0] != "gold":
            raise FormatError(f"{path}: trailing line {rest[0]!r}")
        gold = Assignment(
            {int(p.split(":")[0]): int(p.split(":")[1]) for p in parts[1:]}
        )

    oracle = CostOracle(lambda k, i, t=table: t[k][i - 1])
    return ProblemInstance(
        variables=tuple(variables),
        constraints=ConstraintSystem(tuple(rows)),
        oracle=oracle,
        gold=gold,
    )


def instance_filename(idx: int) -> str:
    return f"instance_{idx:05d}.txt"


def dump_dataset(instances, directory, manifest: dict) -> None:
    os.makedirs(directory, exist_ok=True)
    for idx, instance in enumerate(instances):
        dump_instance(instance, os.path.join(directory, instance_filename(idx)))
    manifest = dict(manifest)
    manifest["count"] = len(instances)
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(directory) -> tuple[list[ProblemInstance], dict]:
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    instances = [
        load_instance(os.path.join(directory, instance_filename(idx)))
        for idx in range(manifest["count"])
    ]
    return instances, manifest
