"""Run configuration with layered precedence.

Values resolve as: built-in defaults, then a key=value config file, then
the environment (SPEEDUP_SEED, SPEEDUP_WORKERS), then explicit CLI flags.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, fields
from typing import Optional


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = 1
    entity_count: int = 2
    difficulty: str = "medium"
    count: int = 100
    width: int = 1
    widths: tuple[int, ...] = (1,)
    thetas: tuple[float, ...] = ()
    epochs: int = 5
    repeat: int = 0
    margin_target: float = 0.5
    separable: bool = False


_PARSERS = {
    int: int,
    float: float,
    str: str,
    bool: lambda s: s.lower() in ("1", "true", "yes"),
}


def _parse_value(name: str, annotation: str, raw: str):
    if annotation.startswith("tuple[int"):
        return tuple(int(x) for x in raw.split(",") if x)
    if annotation.startswith("tuple[float"):
        return tuple(float(x) for x in raw.split(",") if x)
    for typ, parse in _PARSERS.items():
        if annotation == typ.__name__:
            return parse(raw)
    raise ConfigError(f"cannot parse config key {name!r}")


def read_config_file(path) -> dict:
    """key = value lines; blank lines and # comments ignored."""
    known = {f.name: str(f.type) for f in fields(RunConfig)}
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = _parse_value(key, known[key], raw)
    return out


def env_overrides(environ=os.environ) -> dict:
    out = {}
    if "SPEEDUP_SEED" in environ:
        out["seed"] = int(environ["SPEEDUP_SEED"])
    if "SPEEDUP_WORKERS" in environ:
        out["workers"] = int(environ["SPEEDUP_WORKERS"])
    return out


def resolve_config(
    file_path: Optional[str] = None,
    flag_values: Optional[dict] = None,
    environ=os.environ,
) -> RunConfig:
    """Merge defaults, config file, environment and flags, in that order."""
    merged: dict = {}
    if file_path:
        merged.update(read_config_file(file_path))
    merged.update(env_overrides(environ))
    for key, value in (flag_values or {}).items():
        if value is not None:
            merged[key] = value
    return RunConfig(**merged)


def config_lines(config: RunConfig) -> list[str]:
    """Echo of the resolved configuration, one key per line, sorted."""
    return [
        f"{f.name} = {getattr(config, f.name)!r}"
        for f in sorted(fields(RunConfig), key=lambda f: f.name)
    ]
