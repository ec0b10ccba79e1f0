"""Bipartite adjacency data model, exact combinatorics and matrix I/O."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import CombinatorialOverflow, FormatError, SizeError, ValidationError

# Normalisers are held as exact integers no wider than this.
BINOM_MAX_BITS = 128

IndexSet = tuple[int, ...]


@dataclass(frozen=True, eq=False)
class BipartiteMatrix:
    """Dense m x n adjacency matrix of a bipartite network.

    Rows are the first node type, columns the second. ``values`` is stored
    as a read-only float64 copy so instances can be shared freely.
    """

    values: np.ndarray
    row_labels: tuple[str, ...] | None = None
    col_labels: tuple[str, ...] | None = None
    is_binary: bool = field(init=False)

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"expected a non-empty 2-d matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("matrix contains NaN or infinite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "is_binary", bool(np.all((arr == 0) | (arr == 1))))
        for name, size in (("row_labels", arr.shape[0]), ("col_labels", arr.shape[1])):
            labels = getattr(self, name)
            if labels is not None:
                labels = tuple(str(x) for x in labels)
                if len(labels) != size:
                    raise ValidationError(f"{name} has {len(labels)} entries, expected {size}")
                object.__setattr__(self, name, labels)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def N(self) -> int:
        return self.m + self.n

    def __repr__(self):
        kind = "binary" if self.is_binary else "weighted"
        return f"BipartiteMatrix({self.m}x{self.n}, {kind})"


def as_matrix(Y) -> BipartiteMatrix:
    if isinstance(Y, BipartiteMatrix):
        return Y
    return BipartiteMatrix(np.asarray(Y))


def as_array(Y) -> np.ndarray:
    if isinstance(Y, BipartiteMatrix):
        return Y.values
    arr = np.asarray(Y, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2-d matrix, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# Combinatorics
# ---------------------------------------------------------------------------

def binom_exact(n: int, k: int) -> int:
    """Exact binomial coefficient, refusing results wider than 128 bits."""
    if n < 0 or k < 0:
        raise ValidationError(f"binomial arguments must be non-negative, got ({n}, {k})")
    if k > n:
        return 0
    value = math.comb(n, k)
    if value.bit_length() > BINOM_MAX_BITS:
        raise CombinatorialOverflow(
            f"binom({n}, {k}) needs {value.bit_length()} bits (limit {BINOM_MAX_BITS})"
        )
    return value


def _unrank(dim: int, k: int, rank: int) -> list[int]:
    # Lexicographic unranking: pick each element as the smallest value whose
    # block of completions still contains ``rank``.
    out = []
    x = 0
    for slot in range(k):
        while True:
            block = math.comb(dim - x - 1, k - slot - 1)
            if rank < block:
                break
            rank -= block
            x += 1
        out.append(x)
        x += 1
    return out


def enumerate_subsets(dim: int, k: int, start: int = 0, stop: int | None = None) -> Iterator[IndexSet]:
    """Yield the k-subsets of ``range(dim)`` in lexicographic order.

    ``start``/``stop`` select a contiguous slice of the ordering by rank, so
    independent consumers can split the stream into blocks.
    """
    if k < 1 or dim < 1:
        raise ValidationError("dim and k must be positive")
    total = math.comb(dim, k)
    stop = total if stop is None else min(stop, total)
    if k > dim or start >= stop:
        return
    current = _unrank(dim, k, start)
    for _ in range(stop - start):
        yield tuple(current)
        # successor in lexicographic order
        i = k - 1
        while i >= 0 and current[i] == dim - k + i:
            i -= 1
        if i < 0:
            return
        current[i] += 1
        for t in range(i + 1, k):
            current[t] = current[t - 1] + 1


def subset_array(dim: int, k: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """All (or a rank slice of) k-subsets of ``range(dim)`` as an int array of shape (count, k)."""
    if k > dim:
        return np.empty((0, k), dtype=np.int64)
    combos = itertools.combinations(range(dim), k)
    if start or stop is not None:
        combos = itertools.islice(combos, start, stop)
    flat = np.fromiter(itertools.chain.from_iterable(combos), dtype=np.int64)
    return flat.reshape(-1, k)


def extract_submatrix(Y, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
    arr = as_array(Y)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    m, n = arr.shape
    if rows.size and (rows.min() < 0 or rows.max() >= m):
        raise SizeError(f"row index out of bounds for {m} rows: {rows.tolist()}")
    if cols.size and (cols.min() < 0 or cols.max() >= n):
        raise SizeError(f"column index out of bounds for {n} columns: {cols.tolist()}")
    return arr[np.ix_(rows, cols)].copy()


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _delimiter(path: Path, fmt: str | None) -> str:
    if fmt is None:
        fmt = "tsv" if path.suffix.lower() in (".tsv", ".tab") else "csv"
    if fmt not in ("csv", "tsv"):
        raise ValidationError(f"unknown matrix format {fmt!r} (expected csv or tsv)")
    return "\t" if fmt == "tsv" else ","


def load_matrix(path, format: str | None = None) -> BipartiteMatrix:
    """Read a numeric grid from a CSV/TSV file.

    A header row is recognised when its first line holds any non-numeric
    token. A leading label column is recognised when every data row starts
    with a non-numeric token.
    """
    path = Path(path)
    delim = _delimiter(path, format)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            lines = [(num, row) for num, row in enumerate(csv.reader(fh, delimiter=delim), start=1)
                     if any(cell.strip() for cell in row)]
    except FileNotFoundError:
        raise FormatError(f"no such file: {path}") from None

    if not lines:
        raise FormatError(f"{path}: no data rows")
    header = None
    if any(not _is_number(cell.strip()) for cell in lines[0][1]):
        header = [cell.strip() for cell in lines[0][1]]
        lines = lines[1:]
        if not lines:
            raise FormatError(f"{path}: header but no data rows")

    row_labels = None
    if all(not _is_number(row[0].strip()) for _, row in lines):
        row_labels = [row[0].strip() for _, row in lines]
        lines = [(num, row[1:]) for num, row in lines]
        if header is not None and len(header) == len(lines[0][1]) + 1:
            header = header[1:]

    width = len(lines[0][1])
    data = np.empty((len(lines), width), dtype=np.float64)
    for r, (num, row) in enumerate(lines):
        if len(row) != width:
            raise FormatError(f"{path}: ragged row at line {num} ({len(row)} fields, expected {width})")
        for c, cell in enumerate(row):
            try:
                data[r, c] = float(cell)
            except ValueError:
                raise FormatError(
                    f"{path}: non-numeric cell {cell!r} at line {num}, column {c + 1}"
                ) from None
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite values")
    if header is not None and len(header) != width:
        header = None
    return BipartiteMatrix(data, row_labels=row_labels, col_labels=header)


def save_matrix(Y, path, format: str | None = None) -> None:
    """Write a matrix in the format ``load_matrix`` reads, 17 significant digits."""
    Y = as_matrix(Y)
    path = Path(path)
    delim = _delimiter(path, format)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delim, lineterminator="\n")
        if Y.col_labels is not None:
            writer.writerow(([""] if Y.row_labels is not None else []) + list(Y.col_labels))
        for i, row in enumerate(Y.values):
            cells = ["%.17g" % v for v in row]
            if Y.row_labels is not None:
                cells.insert(0, Y.row_labels[i])
            writer.writerow(cells)
