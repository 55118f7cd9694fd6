"""Reading response matrices from CSV and writing result files atomically.

Dense files are header-free rows of integers.  Sparse files carry the
header ``i,j,value`` followed by 1-based triplets; unlisted cells are 0.
"""
from __future__ import annotations

import csv
import os
import tempfile
from pathlib import Path

import numpy as np

from .model import ResponseMatrix

DEFAULT_MEMORY_BUDGET = 4 * 2**30
FORMATS = ("dense-csv", "sparse-triplet-csv")


class DataError(ValueError):
    """Malformed or out-of-range input data."""


def _int(text: str, where: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise DataError(f"{where}: {text!r} is not an integer") from None


def _check_budget(n: int, j: int, budget: int) -> None:
    if n * j * 8 > budget:
        raise DataError(f"a dense {n} x {j} matrix needs {n * j * 8} bytes, over the budget of {budget}")


def load_dense(path, m_levels: int, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> ResponseMatrix:
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            vals = [_int(c, f"line {lineno}, column {col}") for col, c in enumerate(rec, start=1)]
            if rows and len(vals) != len(rows[0]):
                raise DataError(f"line {lineno}: expected {len(rows[0])} values, found {len(vals)}")
            for col, v in enumerate(vals, start=1):
                if not 0 <= v <= m_levels:
                    raise DataError(f"cell ({len(rows) + 1},{col}) on line {lineno}: {v} outside 0..{m_levels}")
            rows.append(vals)
            _check_budget(len(rows), len(vals), memory_budget)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return ResponseMatrix(np.array(rows, dtype=np.int64), m_levels)


def load_sparse(path, m_levels: int, n_rows: int | None = None, n_cols: int | None = None,
                memory_budget: int = DEFAULT_MEMORY_BUDGET) -> ResponseMatrix:
    triplets = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["i", "j", "value"]:
            raise DataError("line 1: sparse files must start with the header 'i,j,value'")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != 3:
                raise DataError(f"line {lineno}: expected 3 fields, found {len(rec)}")
            i, j, v = (_int(c, f"line {lineno}") for c in rec)
            if i < 1 or j < 1:
                raise DataError(f"line {lineno}: indices are 1-based, got ({i},{j})")
            if not 0 <= v <= m_levels:
                raise DataError(f"cell ({i},{j}) on line {lineno}: {v} outside 0..{m_levels}")
            if (i, j) in triplets:
                raise DataError(f"line {lineno}: duplicate entry for cell ({i},{j})")
            triplets[(i, j)] = v
    max_i = max((i for i, _ in triplets), default=0)
    max_j = max((j for _, j in triplets), default=0)
    n = n_rows if n_rows is not None else max_i
    j = n_cols if n_cols is not None else max_j
    if n < 1 or j < 1:
        raise DataError("cannot infer matrix dimensions from an empty sparse file")
    if max_i > n or max_j > j:
        raise DataError(f"entry index ({max_i},{max_j}) exceeds declared dimensions {n} x {j}")
    _check_budget(n, j, memory_budget)
    r = np.zeros((n, j), dtype=np.int64)
    for (i, jj), v in triplets.items():
        r[i - 1, jj - 1] = v
    return ResponseMatrix(r, m_levels)


def load_response(path, fmt: str, m_levels: int, n_rows: int | None = None, n_cols: int | None = None,
                  memory_budget: int = DEFAULT_MEMORY_BUDGET) -> ResponseMatrix:
    if fmt == "dense-csv":
        return load_dense(path, m_levels, memory_budget)
    if fmt == "sparse-triplet-csv":
        return load_sparse(path, m_levels, n_rows, n_cols, memory_budget)
    raise DataError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def _cell(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def matrix_csv(m) -> str:
    m = np.atleast_2d(np.asarray(m))
    return "".join(",".join(_cell(x) for x in row) + "\n" for row in m)


def column_csv(values) -> str:
    return "".join(f"{_cell(v)}\n" for v in values)


class AtomicWriter:
    """Stage several output files and publish them together.

    Nothing appears at the target paths until :meth:`commit`; on an
    exception inside the ``with`` block the staged temporaries are removed.
    """

    def __init__(self):
        self._staged: list[tuple[str, Path]] = []

    def add(self, path, text: str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self._staged.append((tmp, path))

    def commit(self) -> None:
        for tmp, path in self._staged:
            os.replace(tmp, path)
        self._staged.clear()

    def discard(self) -> None:
        for tmp, _ in self._staged:
            try:
                os.unlink(tmp)
            except FileNotFoundError:
                pass
        self._staged.clear()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.commit()
        else:
            self.discard()
        return False
