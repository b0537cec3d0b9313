"""Flat ``key = value`` config files mapped onto :class:`TrainConfig`.

Top-level keys mirror TrainConfig fields (``epochs``, ``lr``, ``seed``, ...).
Nested configs use a dotted prefix: ``loss.lambda_l1``, ``generator.variant``,
``generator.levels``, ``discriminator.layers`` and so on. ``input_size`` is a
shorthand that sets both ``generator.input_size`` and
``discriminator.input_size``. Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any, Mapping

from .training import TrainConfig

NESTED = ("loss", "generator", "discriminator")


def _field_defaults(cls) -> dict[str, Any]:
    out = {}
    for f in dataclasses.fields(cls):
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:
            out[f.name] = f.default_factory()
    return out


def _coerce(key: str, raw: Any, default: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if key.endswith("respath_units"):
        return None if text.lower() in ("", "none") else tuple(int(t) for t in text.split(","))
    return text


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def build_train_config(overrides: Mapping[str, Any], base: TrainConfig | None = None) -> TrainConfig:
    """Apply flat (possibly dotted) overrides on top of ``base``."""
    d = (base or TrainConfig()).to_dict()
    overrides = dict(overrides)
    if "input_size" in overrides:
        size = overrides.pop("input_size")
        overrides.setdefault("generator.input_size", size)
        overrides.setdefault("discriminator.input_size", size)
    top_defaults = _field_defaults(TrainConfig)
    for key, raw in overrides.items():
        if raw is None:
            continue
        section, _, name = key.rpartition(".")
        if section:
            if section not in NESTED or name not in d[section]:
                raise KeyError(f"unknown config key {key!r}")
            sub_default = _field_defaults(type(getattr(TrainConfig(), section)))[name]
            d[section][name] = _coerce(key, raw, sub_default)
        else:
            if name not in top_defaults or name in NESTED:
                raise KeyError(f"unknown config key {key!r}")
            d[name] = _coerce(key, raw, top_defaults[name])
    return TrainConfig.from_dict(d)


def load_train_config(path: Path | None, overrides: Mapping[str, Any] | None = None) -> TrainConfig:
    values: dict[str, Any] = parse_config_text(Path(path).read_text()) if path else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_train_config(values)


def documented_keys() -> list[str]:
    keys = [k for k in _field_defaults(TrainConfig) if k not in NESTED]
    for section in NESTED:
        keys += [f"{section}.{k}" for k in _field_defaults(type(getattr(TrainConfig(), section)))]
    return keys + ["input_size"]
