"""Deterministic serialization: JSON documents and trace CSV.

All floating-point numbers are written with 17 significant digits so 64-bit
values round-trip losslessly and repeated runs produce byte-identical files.
The stdlib json encoder formats floats with repr, which is value-lossless but
not a fixed digit budget, so a small writer is owned here instead.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ConfigError

#: Fixed column order of the training trace CSV.
TRACE_COLUMNS = (
    "step",
    "loss_total",
    "loss_alignment",
    "loss_distribution",
    "avg_pos_sim",
    "paper_bound",
    "strict_bound",
    "paper_gap",
    "strict_gap",
    "grad_norm",
)


def format_float(x: float) -> str:
    """17-significant-digit decimal form; exact float64 round-trip."""
    if x != x or x in (float("inf"), float("-inf")):
        raise ValueError(f"cannot serialize non-finite number {x!r}")
    return format(x, ".17g")


def _render(obj, level: int, indent: int) -> str:
    pad = " " * (indent * (level + 1))
    close_pad = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}{json.dumps(str(k))}: {_render(v, level + 1, indent)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + close_pad + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_render(v, level, indent) for v in obj) + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """Render a JSON document (trailing newline included)."""
    return _render(obj, 0, indent) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def load_json(path) -> dict:
    """Parse a JSON config document; malformed input raises ConfigError."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"top-level JSON value in {p} must be an object")
    return doc


def trace_to_csv(records) -> str:
    """Render step records as CSV with the fixed column order."""
    lines = [",".join(TRACE_COLUMNS)]
    for rec in records:
        row = [str(int(rec.step))]
        row += [format_float(float(getattr(rec, col))) for col in TRACE_COLUMNS[1:]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def parse_trace_csv(text: str) -> list[dict]:
    """Parse a trace CSV back into row dicts; malformed input raises ConfigError."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigError("trace CSV is empty")
    header = tuple(lines[0].split(","))
    if header != TRACE_COLUMNS:
        raise ConfigError(f"unexpected trace header {header!r}")
    if len(lines) < 2:
        raise ConfigError("trace CSV has no data rows")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(TRACE_COLUMNS):
            raise ConfigError(f"trace line {lineno} has {len(parts)} fields, expected {len(TRACE_COLUMNS)}")
        try:
            row = {"step": int(parts[0])}
            for col, val in zip(TRACE_COLUMNS[1:], parts[1:]):
                row[col] = float(val)
        except ValueError as exc:
            raise ConfigError(f"trace line {lineno} is not numeric: {exc}") from exc
        rows.append(row)
    return rows


def read_trace_csv(path) -> list[dict]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"trace file not found: {p}")
    return parse_trace_csv(p.read_text(encoding="utf-8"))
