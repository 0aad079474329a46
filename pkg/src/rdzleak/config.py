"""Plain-text ``key=value`` configuration files.

Keys are the field names of :class:`~rdzleak.experiments.ExperimentConfig`.
Blank lines and ``#`` comments are ignored, angles are given in degrees and
list-valued keys take comma-separated numbers. Keys not present keep their
defaults; unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import math
import typing
from pathlib import Path

from .errors import ConfigError
from .experiments import ExperimentConfig

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_HINTS = typing.get_type_hints(ExperimentConfig)


def _parse_value(key: str, text: str):
    hint = _HINTS[key]
    text = text.strip()
    if hint is tuple:
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise ValueError("expected a comma-separated list of numbers")
        return tuple(float(t) for t in items)
    if hint is int:
        v = float(text)
        if not v.is_integer():
            raise ValueError(f"expected an integer, got {text!r}")
        return int(v)
    if hint is float or key == "RG_m":
        if key == "RG_m" and text.lower() == "auto":
            return None
        v = float(text)
        if not math.isfinite(v):
            raise ValueError(f"expected a finite number, got {text!r}")
        return v
    return text


def _check_angle(key: str, value) -> None:
    # 360 / phi must be an integer number of sensors
    vals = value if isinstance(value, tuple) else (value,)
    for v in vals:
        if not v > 0:
            raise ValueError(f"angle spacing must be positive, got {v}")
        k = 360.0 / v
        if abs(k - round(k)) > 1e-9 * k:
            raise ValueError(f"360 / {v:g} is not an integer number of sensors")


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    values: dict = {}
    where: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: expected key=value, got {raw.strip()!r}", lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"{source}: unknown key", lineno, key)
        if key in where:
            raise ConfigError(f"{source}: duplicate key (first set on line {where[key]})", lineno, key)
        try:
            parsed = _parse_value(key, value)
            if key in ("phi_delta_deg", "sweep_phi_deg"):
                _check_angle(key, parsed)
        except ValueError as exc:
            raise ConfigError(f"{source}: {exc}", lineno, key) from None
        values[key] = parsed
        where[key] = lineno
    try:
        return ExperimentConfig(**values)
    except ValueError as exc:
        key = _culprit(values, where)
        raise ConfigError(f"{source}: {exc}", where.get(key), key) from None


def _culprit(values: dict, where: dict):
    # the most recently set key whose removal makes the config valid
    for key in sorted(where, key=where.get, reverse=True):
        trial = {k: v for k, v in values.items() if k != key}
        try:
            ExperimentConfig(**trial)
        except ValueError:
            continue
        return key
    return max(where, key=where.get) if where else None


def parse_config(path) -> ExperimentConfig:
    """Read a configuration file.

    Raises
    ------
    ConfigError
        With the line number and key of the first offending entry.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))
