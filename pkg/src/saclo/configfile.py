"""Flat key-value config files with [section] headers.

Values are parsed into the dataclass field types of the target config
objects; unknown keys and malformed lines are reported with line numbers.
"""
from __future__ import annotations

import dataclasses
from typing import Any

from .distill import DistillConfig
from .env import EnvConfig
from .ppo import PpoConfig

SECTION_TYPES = {
    "env": EnvConfig,
    "ppo": PpoConfig,
    "distill": DistillConfig,
}


class ConfigError(ValueError):
    pass


def parse_sections(text: str) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in sections[current]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in [{current}]")
        sections[current][key] = value
    return sections


def _coerce(value: str, typ: Any, key: str) -> Any:
    base = typ
    if hasattr(typ, "__origin__"):
        base = typ.__origin__
    try:
        if base is bool:
            low = value.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(value)
        if base is int:
            return int(value)
        if base is float:
            return float(value)
        if base is tuple:
            items = [v for v in value.replace("(", "").replace(")", "").split(",") if v.strip()]
            inner = typ.__args__[0] if hasattr(typ, "__args__") else float
            if inner is int or inner == int:
                return tuple(int(v) for v in items)
            return tuple(float(v) for v in items)
        if base is str:
            return value
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: cannot parse {value!r} as {base.__name__}") from exc
    raise ConfigError(f"key {key!r}: unsupported config field type {typ!r}")


def build_config(cls, overrides: dict[str, str]):
    fields = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in overrides.items():
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} for [{cls.__name__}]")
        kwargs[key] = _coerce(value, _resolve_type(cls, key), key)
    return cls(**kwargs)


def _resolve_type(cls, name: str):
    import typing

    hints = typing.get_type_hints(cls)
    return hints[name]


def load_configs(path) -> dict[str, Any]:
    """Parse a config file into {'env': EnvConfig, 'ppo': PpoConfig, ...};
    absent sections fall back to defaults."""
    with open(path) as f:
        sections = parse_sections(f.read())
    out: dict[str, Any] = {}
    for name, values in sections.items():
        if name not in SECTION_TYPES:
            raise ConfigError(f"unknown section [{name}]")
        out[name] = build_config(SECTION_TYPES[name], values)
    for name, cls in SECTION_TYPES.items():
        out.setdefault(name, cls())
    return out


def dump_config(obj) -> str:
    """Serialize a config dataclass back to key-value lines."""
    lines = []
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def dump_all(configs: dict[str, Any]) -> str:
    parts = []
    for name in sorted(configs):
        parts.append(f"[{name}]")
        parts.append(dump_config(configs[name]))
    return "\n".join(parts)
