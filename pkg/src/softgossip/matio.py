"""File formats for matrices, layouts, and traces.

JSON carries shaped numeric payloads as {"n": rows, ["dim": cols,] "data":
row-major flat list}.  CSV files always start with a header row and print
floats with repr, which round-trips float64 exactly.  All writes go through
a temp file plus rename so readers never observe a partial file.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import ArgumentError


def format_float(x: float) -> str:
    return repr(float(x))


def atomic_write_text(path: str, text: str) -> None:
    """Write text to path via a same-directory temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def matrix_to_obj(m: np.ndarray) -> dict:
    """Square matrix to a JSON-ready object."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ArgumentError(f"expected square matrix, got {m.shape}")
    return {"n": int(m.shape[0]), "data": [float(x) for x in m.ravel()]}


def matrix_from_obj(obj: dict) -> np.ndarray:
    try:
        n = int(obj["n"])
        data = obj["data"]
    except (KeyError, TypeError) as exc:
        raise ArgumentError(f"malformed matrix object: {exc}") from exc
    if len(data) != n * n:
        raise ArgumentError(
            f"matrix object claims n={n} but has {len(data)} entries")
    return np.asarray(data, dtype=float).reshape(n, n)


def array2d_to_obj(m: np.ndarray) -> dict:
    """Rectangular array to a JSON-ready object with explicit column count."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ArgumentError(f"expected 2-D array, got {m.shape}")
    return {"n": int(m.shape[0]), "dim": int(m.shape[1]),
            "data": [float(x) for x in m.ravel()]}


def array2d_from_obj(obj: dict) -> np.ndarray:
    try:
        n = int(obj["n"])
        dim = int(obj["dim"])
        data = obj["data"]
    except (KeyError, TypeError) as exc:
        raise ArgumentError(f"malformed array object: {exc}") from exc
    if len(data) != n * dim:
        raise ArgumentError(
            f"array object claims {n}x{dim} but has {len(data)} entries")
    return np.asarray(data, dtype=float).reshape(n, dim)


def matrix_to_csv(m: np.ndarray) -> str:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ArgumentError(f"expected 2-D array, got {m.shape}")
    header = ",".join(f"c{j}" for j in range(m.shape[1]))
    lines = [header]
    for row in m:
        lines.append(",".join(format_float(x) for x in row))
    return "\n".join(lines) + "\n"


def matrix_from_csv(text: str) -> np.ndarray:
    lines = [ln for ln in text.strip().split("\n") if ln]
    if not lines:
        raise ArgumentError("empty CSV")
    rows = [[float(tok) for tok in ln.split(",")] for ln in lines[1:]]
    if not rows:
        raise ArgumentError("CSV has a header but no data rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ArgumentError("ragged CSV rows")
    return np.asarray(rows, dtype=float)


def table_to_csv(columns: list[tuple[str, list]]) -> str:
    """Named columns to CSV; floats via repr, ints as-is."""
    if not columns:
        raise ArgumentError("need at least one column")
    length = len(columns[0][1])
    if any(len(vals) != length for _, vals in columns):
        raise ArgumentError("columns have unequal lengths")
    header = ",".join(name for name, _ in columns)
    lines = [header]
    for i in range(length):
        cells = []
        for _, vals in columns:
            v = vals[i]
            if isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(format_float(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
