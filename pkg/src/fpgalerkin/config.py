"""Flat ``key=value`` run configuration.

Blank lines and lines starting with ``#`` are ignored. Keys left out
take their defaults; an unknown key is an error.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Tuple

DEFAULT_EPS_LIST = (1.0, 1e-2, 1e-4, 1e-6, 1e-8)


@dataclass(frozen=True)
class RunConfig:
    problem: str = "paper-ex2"
    eps: float = 1e-7
    theta: float = 0.5
    marking_fraction: float = 0.5
    max_dof: int = 20000
    rtol_linear: float = 1e-10
    mesh: str = "paper4"
    out: str = "fpg-out"
    eps_list: Tuple[float, ...] = DEFAULT_EPS_LIST
    # None means: Dorfler for solve/sweep, uniform for convergence
    marking: Optional[str] = None
    initial_guess: str = "center-hat"
    max_outer: int = 10000
    h_min: Optional[float] = None
    timing: bool = False

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_FLOATS = {"eps", "theta", "marking_fraction", "rtol_linear", "h_min"}
_INTS = {"max_dof", "max_outer"}
_BOOLS = {"timing"}


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    return str(value)


def _parse_value(key, text):
    if key in _FLOATS:
        return float(text)
    if key in _INTS:
        return int(text)
    if key in _BOOLS:
        low = text.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{key}: expected a boolean, got {text!r}")
        return low in ("true", "1", "yes")
    if key == "eps_list":
        items = [s for s in text.split(",") if s.strip()]
        if not items:
            raise ValueError("eps_list must not be empty")
        return tuple(float(s) for s in items)
    return text


def emit_config(config: RunConfig) -> str:
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if value is None:
            continue
        lines.append(f"{f.name}={_format(value)}")
    return "\n".join(lines) + "\n"


def parse_config(text: str, base: RunConfig = RunConfig()) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = (s.strip() for s in line.partition("="))
        key = key.replace("-", "_")
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, value)
    return base.replace(**values)


def load_config(path, base: RunConfig = RunConfig()) -> RunConfig:
    return parse_config(Path(path).read_text(), base)
