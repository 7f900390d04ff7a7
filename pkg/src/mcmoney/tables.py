"""CSV emission and loading for matrices and flat tables.

Floats are written with ``repr`` so files round-trip exactly and are
byte-stable; missing entries use the literal token ``NA``.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

NA = "NA"


def fmt(v) -> str:
    if v is None:
        return NA
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return NA if math.isnan(v) else repr(v)
    return str(v)


def write_table(path, header, rows) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_matrix(path, row_labels, col_labels, values, missing=None, corner="country") -> None:
    values = np.asarray(values)
    if missing is None:
        missing = np.zeros(values.shape, dtype=bool)
    rows = ([label] + [NA if missing[i, j] else values[i, j] for j in range(values.shape[1])]
            for i, label in enumerate(row_labels))
    write_table(path, [corner, *col_labels], rows)


def read_matrix(path):
    """Return ``(row_labels, col_labels, values)`` with NaN for ``NA`` cells."""
    header, body = read_table(path)
    cols = header[1:]
    labels = [r[0] for r in body]
    values = np.array([[np.nan if x == NA else float(x) for x in r[1:]] for r in body], dtype=float)
    return labels, cols, values.reshape(len(labels), len(cols))
