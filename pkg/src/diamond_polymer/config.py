"""Experiment configuration: line-oriented ``key = value`` files, env overrides, validation."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields
from typing import Mapping

from .disorder import DisorderModel, parse_disorder, third_moment
from .lattice import DEFAULT_ENUMERATION_CAP, LatticeParams
from .mc_engine import MIN_POOL, MIN_STATS_POOL
from .variance_map import ScalingSchedule

EXPERIMENTS = (
    "lattice-info",
    "variance",
    "schedule",
    "pool",
    "clt",
    "oracle",
    "free-energy",
    "pc",
)
_ALIASES = {"lattice": "lattice-info"}

ENV_PREFIX = "DP_"

# keys that must be present for each experiment
REQUIRED = {
    "lattice-info": ("n",),
    "variance": ("n_list",),
    "schedule": ("n_list",),
    "pool": ("n",),
    "clt": ("n",),
    "oracle": ("n", "beta"),
    "free-energy": ("n", "beta"),
    "pc": (),
}


class ConfigError(ValueError):
    """Carries every validation problem found, not just the first."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    b: int = 2
    s: int | None = None
    n: int | None = None
    n_list: tuple[int, ...] | None = None
    disorder: str = "gaussian"
    m: int = 1
    eps: float = 0.0
    tau: float | None = None
    beta: float | None = None
    pool: int = 100_000
    seed: int = 0
    trials: int = 100
    cap: int = DEFAULT_ENUMERATION_CAP
    workers: int = 1
    output: str | None = None

    @property
    def branches(self) -> int:
        return self.b if self.s is None else self.s

    @property
    def model(self) -> DisorderModel:
        return parse_disorder(self.disorder)

    @property
    def skew(self) -> float:
        return third_moment(self.model) if self.tau is None else self.tau

    def lattice(self, n: int | None = None) -> LatticeParams:
        depth = self.n if n is None else n
        return LatticeParams(self.b, self.branches, 0 if depth is None else depth)

    def schedule(self) -> ScalingSchedule:
        return ScalingSchedule(self.b, self.m, self.eps, self.skew)

    def to_text(self) -> str:
        """Serialize in the config-file format; :func:`parse_config` inverts it."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                text = ",".join(str(v) for v in value)
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{_key_name(f.name)} = {text}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[_key_name(f.name)] = list(value) if isinstance(value, tuple) else value
        return out


def _key_name(field_name: str) -> str:
    return field_name.replace("_", "-")


def _field_name(key: str) -> str:
    return key.strip().lower().replace("-", "_")


_FIELDS = {f.name for f in fields(ExperimentConfig)}


def read_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Returns raw strings."""
    raw: dict[str, str] = {}
    errors = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        raw[_field_name(key)] = value.strip()
    if errors:
        raise ConfigError(errors)
    return raw


def env_overrides(environ: Mapping[str, str] | None = None) -> dict[str, str]:
    """``DP_SEED=7`` becomes ``{"seed": "7"}``."""
    environ = os.environ if environ is None else environ
    return {
        _field_name(k[len(ENV_PREFIX):]): v
        for k, v in environ.items()
        if k.startswith(ENV_PREFIX) and len(k) > len(ENV_PREFIX)
    }


def _to_int(text: str) -> int:
    value = float(text) if any(c in text for c in ".eE") else int(text)
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"{text!r} is not an integer")
        value = int(value)
    return value


def _to_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"{text!r} is not finite")
    return value


def _to_int_list(text: str) -> tuple[int, ...]:
    items = [t for t in text.replace(" ", "").split(",") if t]
    if not items:
        raise ValueError("empty list")
    return tuple(_to_int(t) for t in items)


_CONVERT = {
    "experiment": lambda t: _ALIASES.get(t.strip().lower(), t.strip().lower()),
    "b": _to_int,
    "s": _to_int,
    "n": _to_int,
    "n_list": _to_int_list,
    "disorder": lambda t: parse_disorder(t).spec(),
    "m": _to_int,
    "eps": _to_float,
    "tau": _to_float,
    "beta": _to_float,
    "pool": _to_int,
    "seed": _to_int,
    "trials": _to_int,
    "cap": _to_int,
    "workers": _to_int,
    "output": str,
}

# (field, lower bound, human description)
_BOUNDS = (
    ("b", 2, "b must be >= 2"),
    ("s", 2, "s must be >= 2"),
    ("n", 0, "n must be >= 0"),
    ("m", 1, "m must be >= 1"),
    ("eps", 0.0, "eps must be >= 0"),
    ("beta", 0.0, "beta must be >= 0"),
    ("pool", MIN_POOL, f"pool must be >= {MIN_POOL}"),
    ("seed", 0, "seed must be >= 0"),
    ("trials", 1, "trials must be >= 1"),
    ("cap", 1, "cap must be >= 1"),
    ("workers", 1, "workers must be >= 1"),
)


def parse_config(
    text: str | None = None,
    flags: Mapping[str, str | None] | None = None,
    environ: Mapping[str, str] | None = None,
) -> ExperimentConfig:
    """Merge file text, ``DP_`` environment overrides and flags (in increasing priority).

    Raises ConfigError listing every problem found.
    """
    raw: dict[str, str] = {}
    errors: list[str] = []
    if text is not None:
        try:
            raw.update(read_config_text(text))
        except ConfigError as exc:
            errors.extend(exc.errors)
    raw.update(env_overrides(environ if environ is not None else {}))
    for key, value in (flags or {}).items():
        if value is not None:
            raw[_field_name(key)] = str(value)

    values: dict[str, object] = {}
    for key, text_value in raw.items():
        if key not in _FIELDS:
            errors.append(f"unknown key {_key_name(key)!r}")
            continue
        try:
            values[key] = _CONVERT[key](text_value)
        except ValueError as exc:
            errors.append(f"{_key_name(key)}: invalid value {text_value!r} ({exc})")

    exp = values.get("experiment")
    if exp is None:
        if "experiment" not in raw:
            errors.append("missing required key 'experiment'")
    elif exp not in EXPERIMENTS:
        errors.append(f"experiment: unknown kind {exp!r}; expected one of {EXPERIMENTS}")
        exp = None

    for name, lo, message in _BOUNDS:
        if name in values and values[name] < lo:
            errors.append(f"{_key_name(name)}: {message}, got {values[name]}")
    if "n_list" in values and min(values["n_list"]) < 1:
        errors.append(f"n-list: entries must be >= 1, got {list(values['n_list'])}")

    if exp is not None:
        for name in REQUIRED[exp]:
            if name not in raw:
                errors.append(f"missing required key {_key_name(name)!r} for experiment {exp!r}")
        if exp in ("clt", "free-energy") and values.get("n", 1) < 1:
            errors.append(f"n: {exp} needs n >= 1, got {values['n']}")
        if exp == "clt" and values.get("pool", MIN_STATS_POOL) < MIN_STATS_POOL:
            errors.append(f"pool: clt needs pool >= {MIN_STATS_POOL}, got {values['pool']}")
        if exp == "free-energy":
            b = values.get("b", 2)
            s = values.get("s", b)
            if b != s:
                errors.append(f"s: free-energy needs s == b, got b={b}, s={s}")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(**values)
