"""Flat ``key = value`` config files with ``[section]`` headers.

Grammar (read with :mod:`configparser`, no interpolation):

* ``[name]`` starts a section; names are case-sensitive.
* ``key = value`` (or ``key: value``) inside a section; keys are lower-cased.
* ``#`` or ``;`` at the start of a line begins a comment.
* Values: integers, decimals, ``true``/``false``, ``none``, bare strings,
  and comma-separated tuples (``64, 128, 256``).
* Seed lists: comma-separated integers and inclusive ranges ``a..b``.
"""
from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path
from typing import Any, Optional

from ..errors import ParseError


def read_ini(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    text = Path(path).read_text(encoding="utf-8")
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ParseError(f"{path}: {exc.__class__.__name__}: {exc.message}", line) from None
    return cp


def _scalar(text: str) -> Any:
    t = text.strip()
    low = t.lower()
    if low in ("none", ""):
        return None
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def coerce(text: str, default: Any) -> Any:
    if isinstance(default, tuple):
        return tuple(_scalar(p) for p in text.split(","))
    value = _scalar(text)
    if value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValueError(f"expected true/false, got {text!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ValueError(f"expected an integer, got {text!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"expected a number, got {text!r}")
        return float(value)
    if isinstance(default, str):
        return text.strip()
    return value


def build(cls, section: Optional[configparser.SectionProxy], skip: tuple[str, ...] = (), **overrides):
    """Instantiate dataclass ``cls`` from a config section, coercing by field default type."""
    kwargs = dict(overrides)
    if section is not None:
        names = {f.name: f for f in dataclasses.fields(cls)}
        for key, raw in section.items():
            if key in skip:
                continue
            if key not in names:
                raise ParseError(f"[{section.name}] unknown key {key!r}")
            f = names[key]
            if f.default is not dataclasses.MISSING:
                default = f.default
            elif f.default_factory is not dataclasses.MISSING:  # type: ignore[misc]
                default = f.default_factory()  # type: ignore[misc]
            else:
                default = None
            try:
                kwargs[key] = coerce(raw, default)
            except ValueError as exc:
                raise ParseError(f"[{section.name}] {key}: {exc}") from None
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        name = section.name if section is not None else cls.__name__
        raise ParseError(f"[{name}] {exc}") from None


def parse_seeds(text: str) -> list[int]:
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                a, b = part.split("..", 1)
                lo, hi = int(a), int(b)
                if hi < lo:
                    raise ValueError
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise ParseError(f"bad seed specification {part!r}") from None
    if not seeds:
        raise ParseError("empty seed list")
    return seeds
