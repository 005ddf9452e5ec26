"""Plain-text ``key = value`` experiment configuration.

Blank lines and lines starting with ``#`` are ignored. Values are typed by the
schema of the chosen mode; unknown keys are rejected.
"""
from __future__ import annotations

from dataclasses import dataclass


class ConfigError(ValueError):
    pass


def int_list(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def str_list(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def optional_int(text):
    t = str(text).strip().lower()
    return None if t in ("", "none") else int(t)


def truncation_value(text):
    """``auto`` (truncate only long horizons), ``full``/``none`` or a positive integer."""
    t = str(text).strip().lower()
    if t == "auto":
        return "auto"
    if t in ("full", "none", ""):
        return None
    m = int(t)
    if m < 1:
        raise ValueError("truncation must be positive")
    return m


def boolean(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Field:
    type: object
    default: object
    help: str = ""


def format_value(value) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text, source="<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key.replace("-", "_")] = value
    return out


def read_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), str(path))


def resolve(schema: dict, file_values: dict, flag_values: dict) -> dict:
    """Merge defaults, file values and flags (in increasing priority) and type them."""
    unknown = sorted(set(file_values) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config key: {unknown[0]}")
    resolved = {}
    for key, field in schema.items():
        if flag_values.get(key) is not None:
            raw = flag_values[key]
        elif key in file_values:
            raw = file_values[key]
        else:
            raw = field.default
        if raw is None or (isinstance(raw, str) and raw.strip().lower() == "none"):
            resolved[key] = None
            continue
        try:
            resolved[key] = field.type(raw) if isinstance(raw, str) else raw
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value for {key}: {raw!r} ({exc})") from None
    return resolved


def dump_config(resolved: dict) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in sorted(resolved.items()))
