"""YAML experiment configs: strict schemas with line-numbered diagnostics."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, Callable

import yaml

from .circle import GOLDEN

U64_MAX = 2 ** 64 - 1
REQUIRED = object()


class ConfigError(ValueError):
    """Invalid configuration; the message names the source, line and key path."""

    def __init__(self, message: str, key: str = "", line: int | None = None, source: str = "<config>"):
        where = source if line is None else f"{source}:{line}"
        super().__init__(f"{where}: {key or '<root>'}: {message}")
        self.key = key
        self.line = line


def _path_str(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def load_yaml(text: str, source: str = "<config>") -> tuple[Any, dict]:
    """Parse ``text`` and map every key path to its 1-based line number."""
    loader = yaml.SafeLoader(text)
    try:
        node = loader.get_single_node()
        if node is None:
            return {}, {}
        data = loader.construct_document(node)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(str(exc.problem), line=mark.line + 1 if mark else None, source=source) from None
    finally:
        loader.dispose()
    lines: dict[tuple, int] = {}

    def walk(n, d, path):
        lines[path] = n.start_mark.line + 1
        if isinstance(n, yaml.MappingNode):
            seen = set()
            for kn, vn in n.value:
                key = kn.value
                if key in seen:
                    raise ConfigError("duplicate key", _path_str(path + (key,)), kn.start_mark.line + 1, source)
                seen.add(key)
                walk(vn, d[key], path + (key,))
        elif isinstance(n, yaml.SequenceNode):
            for i, (vn, dv) in enumerate(zip(n.value, d)):
                walk(vn, dv, path + (i,))

    walk(node, data, ())
    return data, lines


class ItemError(ValueError):
    """A converter complaint about one element of a list value."""

    def __init__(self, index: int, message: str):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class Field:
    convert: Callable[[Any], Any]
    default: Any = REQUIRED
    doc: str = ""


class Section(dict):
    """Nested schema; ``optional`` sections may be omitted entirely."""

    def __init__(self, fields: dict, optional: bool = False):
        super().__init__(fields)
        self.optional = optional


class ListOf:
    def __init__(self, item, optional: bool = False):
        self.item = item
        self.optional = optional


# -- converters ---------------------------------------------------------------

def as_int(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"expected an integer, got {v!r}")
    return v


def pos_int(v) -> int:
    v = as_int(v)
    if v < 1:
        raise ValueError(f"expected a positive integer, got {v}")
    return v


def nonneg_int(v) -> int:
    v = as_int(v)
    if v < 0:
        raise ValueError(f"expected a non-negative integer, got {v}")
    return v


def u64(v) -> int:
    v = as_int(v)
    if not 0 <= v <= U64_MAX:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {v}")
    return v


def as_float(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ValueError(f"expected a finite number, got {v!r}")
    return float(v)


def pos_float(v) -> float:
    v = as_float(v)
    if v <= 0:
        raise ValueError(f"expected a positive number, got {v}")
    return v


def nonneg_float(v) -> float:
    v = as_float(v)
    if v < 0:
        raise ValueError(f"expected a non-negative number, got {v}")
    return v


def optional(conv):
    def f(v):
        return None if v is None else conv(v)
    return f


def choice(*options):
    def f(v):
        if v not in options:
            raise ValueError(f"expected one of {', '.join(map(str, options))}; got {v!r}")
        return v
    return f


def float_list(conv=as_float, min_len: int = 1):
    def f(v):
        if not isinstance(v, list) or len(v) < min_len:
            raise ValueError(f"expected a list of at least {min_len} numbers, got {v!r}")
        out = []
        for i, x in enumerate(v):
            try:
                out.append(conv(x))
            except ItemError:
                raise
            except ValueError as exc:
                raise ItemError(i, str(exc)) from None
        return out
    return f


def band(v):
    lo, hi = float_list(as_float, 2)(v)
    if len(v) != 2 or not lo < hi:
        raise ValueError(f"expected [low, high] with low < high, got {v!r}")
    return [lo, hi]


_GOLDEN_RE = re.compile(r"^\s*golden\s*(?:([*/])\s*([0-9]*\.?[0-9]+))?\s*$")


def angle(v) -> float:
    """A number, or ``golden`` optionally scaled as ``golden/10`` or ``golden*0.5``."""
    if isinstance(v, str):
        m = _GOLDEN_RE.match(v)
        if not m:
            raise ValueError(f"expected a number or 'golden[/k|*k]', got {v!r}")
        if m.group(1) is None:
            return GOLDEN
        k = float(m.group(2))
        if m.group(1) == "/" and k == 0:
            raise ValueError("division by zero")
        return GOLDEN / k if m.group(1) == "/" else GOLDEN * k
    return as_float(v)


def matrix4(v) -> list[float]:
    if not isinstance(v, list) or len(v) != 4:
        raise ValueError(f"expected [a, b, c, d], got {v!r}")
    return [as_float(x) for x in v]


def matrix_list(v) -> list[list[float]]:
    if not isinstance(v, list) or not v:
        raise ValueError(f"expected a list of [a, b, c, d] matrices, got {v!r}")
    out = []
    for i, m in enumerate(v):
        try:
            out.append(matrix4(m))
        except ValueError as exc:
            raise ItemError(i, str(exc)) from None
    return out


TRIG = Section({
    "mean": Field(as_float, 0.0, "constant term"),
    "cos": Field(float_list(as_float, 0), [], "amplitudes of cos(2 pi p x), p = 1, 2, ..."),
    "sin": Field(float_list(as_float, 0), [], "amplitudes of sin(2 pi p x), p = 1, 2, ..."),
})


# -- validation ----------------------------------------------------------------

def validate(data, schema: Section, lines: dict, source: str = "<config>", path: tuple = ()) -> dict:
    """Resolve ``data`` against ``schema``: unknown keys are rejected, defaults filled in."""
    line = lines.get(path)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping, got {type(data).__name__}", _path_str(path), line, source)
    unknown = [k for k in data if k not in schema]
    if unknown:
        k = unknown[0]
        allowed = ", ".join(sorted(schema))
        raise ConfigError(f"unknown key (allowed: {allowed})", _path_str(path + (k,)),
                          lines.get(path + (k,), line), source)
    out = {}
    for key, spec in schema.items():
        kp = path + (key,)
        if isinstance(spec, Section):
            if key not in data and spec.optional:
                out[key] = None
                continue
            out[key] = validate(data.get(key), spec, lines, source, kp)
        elif isinstance(spec, ListOf):
            if key not in data:
                if spec.optional:
                    out[key] = None
                    continue
                raise ConfigError("missing required key", _path_str(kp), line, source)
            items = data[key]
            if not isinstance(items, list) or not items:
                raise ConfigError("expected a non-empty list", _path_str(kp), lines.get(kp, line), source)
            out[key] = [validate(it, spec.item, lines, source, kp + (i,)) for i, it in enumerate(items)]
        else:
            if key not in data:
                if spec.default is REQUIRED:
                    raise ConfigError("missing required key", _path_str(kp), line, source)
                out[key] = spec.default
                continue
            try:
                out[key] = spec.convert(data[key])
            except ItemError as exc:
                ip = kp + (exc.index,)
                raise ConfigError(str(exc), _path_str(ip), lines.get(ip, lines.get(kp, line)), source) from None
            except ValueError as exc:
                raise ConfigError(str(exc), _path_str(kp), lines.get(kp, line), source) from None
    return out


def describe(schema: Section, indent: int = 0) -> str:
    """Plain-text listing of a schema with defaults, for ``list``."""
    pad = "  " * indent
    rows = []
    for key, spec in schema.items():
        if isinstance(spec, Section):
            rows.append(f"{pad}{key}:{' (optional)' if spec.optional else ''}")
            rows.append(describe(spec, indent + 1))
        elif isinstance(spec, ListOf):
            rows.append(f"{pad}{key}: list of{' (optional)' if spec.optional else ''}")
            rows.append(describe(spec.item, indent + 2))
        else:
            default = "required" if spec.default is REQUIRED else f"default {spec.default!r}"
            rows.append(f"{pad}{key}: {default}{'  # ' + spec.doc if spec.doc else ''}")
    return "\n".join(r for r in rows if r)
