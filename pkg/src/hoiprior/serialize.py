"""Canonical JSON encoding and strict schema checking.

Output is deterministic: object keys are sorted, floats are rendered with 17
significant digits (which round-trips float64 exactly), and there is no
whitespace variation. `load -> dump` of any document we emit is therefore
byte-identical, which is what the end-to-end determinism checks compare.
"""

from __future__ import annotations

import json
import math
from typing import Any

from .errors import SchemaError

__all__ = [
    "canonical_dumps",
    "canonical_loads",
    "dump_file",
    "load_file",
    "require_keys",
    "as_int",
    "as_float",
    "as_list",
    "as_str",
]


def _encode(value: Any, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError("cannot serialize non-finite float")
        if value == int(value) and abs(value) < 1e16:
            out.append(f"{value:.1f}")
        else:
            out.append(format(value, ".17g"))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=True))
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _encode(item, out)
        out.append("]")
    elif isinstance(value, dict):
        out.append("{")
        for i, key in enumerate(sorted(value)):
            if not isinstance(key, str):
                raise ValueError(f"object keys must be strings, got {type(key)}")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=True))
            out.append(":")
            _encode(value[key], out)
        out.append("}")
    else:
        raise ValueError(f"cannot serialize {type(value)}")


def canonical_dumps(value: Any) -> str:
    out: list[str] = []
    _encode(value, out)
    return "".join(out)


def canonical_loads(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc


def dump_file(path, value: Any) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(canonical_dumps(value))
        fh.write("\n")


def load_file(path) -> Any:
    with open(path, "r", encoding="ascii") as fh:
        return canonical_loads(fh.read())


def require_keys(obj: Any, keys: set[str], where: str) -> dict:
    """Check `obj` is a dict with exactly `keys`; unknown fields are rejected."""
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected object, got {type(obj).__name__}")
    have = set(obj)
    if have != keys:
        missing = keys - have
        extra = have - keys
        parts = []
        if missing:
            parts.append(f"missing {sorted(missing)}")
        if extra:
            parts.append(f"unknown {sorted(extra)}")
        raise SchemaError(f"{where}: {', '.join(parts)}")
    return obj


def as_int(value: Any, where: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise SchemaError(f"{where}: expected integer, got {value!r}")
    return value


def as_float(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: expected number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise SchemaError(f"{where}: non-finite number")
    return value


def as_list(value: Any, where: str) -> list:
    if not isinstance(value, list):
        raise SchemaError(f"{where}: expected array, got {type(value).__name__}")
    return value


def as_str(value: Any, where: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(f"{where}: expected string, got {type(value).__name__}")
    return value
