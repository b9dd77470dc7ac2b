"""CSV readers and writers shared by the matrix, point-set and net formats.

Numbers are written with 17 significant digits, ``,`` separators and ``\\n``
line endings so that identical arrays always serialize to identical bytes.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np


def format_float(x: float) -> str:
    return f"{float(x):.17g}"


def matrix_to_csv(a) -> str:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return "".join(",".join(format_float(x) for x in row) + "\n" for row in a)


def matrix_from_csv(text: str) -> np.ndarray:
    """Parse headerless CSV rows; ragged or non-finite input raises ``ValueError``."""
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            values = [float(cell) for cell in row]
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if rows and len(values) != len(rows[0]):
            raise ValueError(
                f"line {lineno}: ragged row with {len(values)} columns, expected {len(rows[0])}"
            )
        rows.append(values)
    if not rows:
        raise ValueError("empty matrix file")
    arr = np.array(rows, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix file contains NaN or Inf")
    return arr


def read_matrix(path) -> np.ndarray:
    return matrix_from_csv(Path(path).read_text())


def write_matrix(path, a) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(matrix_to_csv(a))


def table_to_csv(header: list[str], columns: list) -> str:
    """Render named columns; floats get 17 significant digits, ints stay ints."""
    n = len(columns[0]) if columns else 0
    lines = [",".join(header)]
    for i in range(n):
        cells = []
        for col in columns:
            v = col[i]
            if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
                cells.append(str(int(v)))
            else:
                cells.append(format_float(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
