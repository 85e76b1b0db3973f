"""CSV and JSON helpers with round-trip float formatting."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import InputError


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    if value is None:
        return ""
    return str(value)


def write_csv(path, rows, columns=None) -> Path:
    rows = list(rows)
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row.get(c)) for c in columns])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def read_regression_csv(path):
    """Read a headered CSV whose last column is the response.

    Returns
    -------
    header : list of str
    X : ndarray of shape (n, d)
    Y : ndarray of shape (n,)
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    lines = list(csv.reader(text.splitlines()))
    if not lines:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in lines[0]]
    if len(header) < 2:
        raise InputError(f"{path}, line 1: need at least one feature column and a response column")
    if all(_is_number(h) for h in header):
        raise InputError(f"{path}, line 1: missing header row")
    rows = []
    for lineno, row in enumerate(lines[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise InputError(f"{path}, line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise InputError(f"{path}, line {lineno}: non-numeric field") from None
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"{path}, line {lineno}: non-finite value")
        rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    data = np.array(rows)
    return header, data[:, :-1], data[:, -1]


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True
