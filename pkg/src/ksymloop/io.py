"""Deterministic JSON / CSV output (17 significant digits)."""

from __future__ import annotations

import csv
import json
import math
from io import StringIO
from pathlib import Path

import numpy as np

from .dpw import LoopField
from .errors import IoError
from .geometry import ProjectorField


def _num(x: float) -> str:
    if not math.isfinite(x):
        return json.dumps(x)
    return f"{x:.17g}"


def to_plain(obj):
    """Convert numpy scalars/arrays and complex numbers to JSON-ready builtins."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": to_plain(obj.real.tolist()), "im": to_plain(obj.imag.tolist())}
        return to_plain(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_num(v) if isinstance(v, float) else str(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, float):
        return _num(obj)
    return json.dumps(obj)


def dumps(obj, indent: int = 2) -> str:
    """Canonical JSON: sorted keys, floats with 17 significant digits."""
    return _encode(to_plain(obj), indent, 0) + "\n"


def _write(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path


def write_json(obj, path) -> Path:
    return _write(path, dumps(obj))


def _csv_text(header: list[str], rows) -> str:
    buf = StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def loop_field_rows(field: LoopField) -> tuple[list[str], list[list[str]]]:
    """One row per (lambda-degree, grid node) over the union window of the field."""
    lo = min(v.dmin for _, v in field.items())
    hi = max(v.dmax for _, v in field.items())
    n = field.values[0][0].n
    header = ["degree", "x", "y"] + [f"re{i}{j}" for i in range(n) for j in range(n)] + [f"im{i}{j}" for i in range(n) for j in range(n)]
    rows = []
    nodes = list(field.items())
    for d in range(lo, hi + 1):
        for z, L in nodes:
            C = L.coeff(d)
            rows.append([str(d), _num(z.real), _num(z.imag)] + [_num(x) for x in C.real.ravel()] + [_num(x) for x in C.imag.ravel()])
    return header, rows


def projector_field_rows(field: ProjectorField) -> tuple[list[str], list[list[str]]]:
    n = field.n
    header = ["x", "y"] + [f"re{i}{j}" for i in range(n) for j in range(n)] + [f"im{i}{j}" for i in range(n) for j in range(n)]
    rows = []
    nodes = field.grid.nodes
    for idx in np.ndindex(nodes.shape):
        P = field.values[idx]
        z = nodes[idx]
        rows.append([_num(z.real), _num(z.imag)] + [_num(x) for x in P.real.ravel()] + [_num(x) for x in P.imag.ravel()])
    return header, rows


def field_to_dict(field) -> dict:
    if isinstance(field, LoopField):
        return {
            "grid": field.grid.to_dict(),
            "tag": field.tag,
            "values": [[{"z": complex(z), "loop": L.to_dict()} for z, L in zip(row_z, row)] for row_z, row in zip(field.grid.nodes, field.values)],
            "diagnostics": field.diagnostics,
        }
    if isinstance(field, ProjectorField):
        return {
            "grid": field.grid.to_dict(),
            "label": field.label,
            "rank": field.rank,
            "singular": field.singular,
            "values": field.values,
        }
    raise TypeError(f"cannot export {type(field).__name__}")


def export_field(field, path, fmt: str = "json") -> list[Path]:
    """Write a loop or projector field as JSON or CSV; returns the written files."""
    if fmt == "json":
        return [write_json(field_to_dict(field), Path(path).with_suffix(".json"))]
    if fmt == "csv":
        if isinstance(field, LoopField):
            header, rows = loop_field_rows(field)
        elif isinstance(field, ProjectorField):
            header, rows = projector_field_rows(field)
        else:
            raise TypeError(f"cannot export {type(field).__name__}")
        return [_write(Path(path).with_suffix(".csv"), _csv_text(header, rows))]
    raise ValueError(f"unknown format {fmt!r}")
