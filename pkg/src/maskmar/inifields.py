"""Map frozen dataclasses to and from INI sections."""
from __future__ import annotations

import dataclasses
import math
import types
import typing
from configparser import SectionProxy
from typing import Any, Mapping

from maskmar.errors import ConfigError


def _format(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ", ".join(_format(c) for c in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_section(obj) -> dict[str, str]:
    return {f.name: _format(getattr(obj, f.name)) for f in dataclasses.fields(obj)}


_TRUE = {"1", "yes", "true", "on"}
_FALSE = {"0", "no", "false", "off"}


def _parse_float(raw: str) -> float:
    v = float(raw)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _parse(tp, raw: str):
    raw = raw.strip()
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType) and type(None) in args:
        if raw.lower() in ("none", ""):
            return None
        (inner,) = [a for a in args if a is not type(None)]
        return _parse(inner, raw)
    if origin is tuple:
        elem = args[0]
        return tuple(_parse(elem, c) for c in raw.split(",") if c.strip())
    if tp is bool:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if tp is int:
        return int(raw)
    if tp is float:
        return _parse_float(raw)
    return raw


def from_section(cls, section: Mapping[str, str] | SectionProxy | None, name: str = "", strict: bool = True):
    """Build ``cls`` from ``section``, using field defaults for missing keys.

    Unknown keys raise :class:`ConfigError` when ``strict``; so do values
    that do not parse or that the dataclass rejects.
    """
    label = f"[{name or cls.__name__}]"
    hints = typing.get_type_hints(cls)
    fields = {f.name for f in dataclasses.fields(cls)}
    section = {} if section is None else dict(section.items())
    unknown = sorted(set(section) - fields)
    if strict and unknown:
        raise ConfigError(f"{label}: unknown key(s) {', '.join(unknown)}")
    kw = {}
    for key in fields & set(section):
        try:
            kw[key] = _parse(hints[key], section[key])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{label} {key} = {section[key]!r}: {exc}") from None
    try:
        return cls(**kw)
    except ConfigError as exc:
        raise ConfigError(f"{label}: {exc}") from None
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{label}: {exc}") from None
