"""U-statistic evaluation.

``u_naive`` enumerates every (row set, column set) pair; the fast paths
reach the same sums through Gram-matrix identities. Both return the
per-row and per-column kernel sums the variance estimators need.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .core import as_array, binom_exact, subset_array
from .errors import ComplexityError, NumericError, SizeError, UnknownKernelError, ValidationError

MAX_TERMS = 10**10
_CHUNK_ELEMENTS = 1 << 22
THREADS_ENV = "BIPUSTAT_THREADS"


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


@dataclass(frozen=True, eq=False)
class UStatResult:
    """Value of a U-statistic plus the row/column sums of its kernel terms.

    ``row_sums[i]`` is the sum of the kernel over all blocks containing row
    ``i``; ``col_sums`` likewise for columns.
    """

    value: float
    row_sums: np.ndarray
    col_sums: np.ndarray
    total_terms: int
    m: int
    n: int
    p: int
    q: int
    kernel_id: str
    method: str = "naive"

    @property
    def total(self) -> float:
        return self.value * self.total_terms


def term_count(m: int, n: int, p: int, q: int) -> int:
    return binom_exact(m, p) * binom_exact(n, q)


def _check(arr: np.ndarray, h: K.Kernel):
    m, n = arr.shape
    if not h.is_symmetric:
        raise ValidationError(f"kernel {h.id} is not symmetric; pass it through kernels.symmetrize first")
    if h.p > K.MAX_KERNEL_DIM or h.q > K.MAX_KERNEL_DIM:
        raise ValidationError(f"kernel {h.id} is {h.p}x{h.q}; engine limit is {K.MAX_KERNEL_DIM}")
    if m < h.p or n < h.q:
        raise SizeError(f"a {m}x{n} matrix is too small for the {h.p}x{h.q} kernel {h.id}")


def _naive_chunk(arr, h, rows, cols):
    blocks = arr[rows[:, None, :, None], cols[None, :, None, :]]
    vals = np.broadcast_to(h.eval(blocks), (rows.shape[0], cols.shape[0]))
    if not np.all(np.isfinite(vals)):
        raise NumericError(f"kernel {h.id} produced non-finite values")
    per_row_set = vals.sum(axis=1)
    per_col_set = vals.sum(axis=0)
    return per_row_set, per_col_set, math.fsum(per_row_set)


def u_naive(Y, h: K.Kernel, force: bool = False, threads: int | None = None,
            max_terms: int = MAX_TERMS) -> UStatResult:
    """U-statistic by enumerating every unordered (row set, column set) pair.

    Row sets are split into contiguous lexicographic chunks; chunks may run
    on a thread pool but are merged in chunk order, so the result is
    bit-identical for any thread count.
    """
    arr = as_array(Y)
    _check(arr, h)
    m, n = arr.shape
    total_terms = term_count(m, n, h.p, h.q)
    if total_terms > max_terms and not force:
        raise ComplexityError(
            f"{total_terms} kernel evaluations exceed the limit of {max_terms}; use force to override"
        )
    rows = subset_array(m, h.p)
    cols = subset_array(n, h.q)
    per_chunk = max(1, _CHUNK_ELEMENTS // max(1, cols.shape[0] * h.p * h.q))
    chunks = [rows[s:s + per_chunk] for s in range(0, rows.shape[0], per_chunk)]
    threads = default_threads() if threads is None else threads
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: _naive_chunk(arr, h, r, cols), chunks))
    else:
        results = [_naive_chunk(arr, h, r, cols) for r in chunks]

    row_sums = np.zeros(m)
    col_acc = np.zeros(cols.shape[0])
    totals = []
    for rows_c, (per_row_set, per_col_set, tot) in zip(chunks, results):
        np.add.at(row_sums, rows_c.ravel(), np.repeat(per_row_set, h.p))
        col_acc += per_col_set
        totals.append(tot)
    col_sums = np.zeros(n)
    np.add.at(col_sums, cols.ravel(), np.repeat(col_acc, h.q))
    value = math.fsum(totals) / total_terms
    return UStatResult(value, row_sums, col_sums, total_terms, m, n, h.p, h.q, h.id, "naive")


# ---------------------------------------------------------------------------
# Whole-matrix fast paths: (total, row_sums, col_sums) over unordered blocks
# ---------------------------------------------------------------------------

def _sums_hD(Y):
    return Y.sum(), Y.sum(axis=1), Y.sum(axis=0)


def _sums_h1(Y):
    r = Y.sum(axis=1)
    Y2 = Y * Y
    t = (r * r - Y2.sum(axis=1)) / 2
    cols = Y.T @ r - Y2.sum(axis=0)
    return t.sum(), t, cols


def _sums_hC(Y):
    total, cols, rows = _sums_h1(Y.T)
    return total, rows, cols


def _sums_h2(Y):
    r = Y.sum(axis=1)
    c = Y.sum(axis=0)
    S = r.sum()
    Y2 = Y * Y
    rows = (r * (S - r) - Y @ c + Y2.sum(axis=1)) / 2
    cols = (c * (S - c) - Y.T @ r + Y2.sum(axis=0)) / 2
    total = (S * S - r @ r - c @ c + Y2.sum()) / 4
    return total, rows, cols


def _pair_gram_sums(Y):
    # sum over the other rows i' of  sum_{j<j'} Y_ij Y_ij' Y_i'j Y_i'j'
    G = Y @ Y.T
    Y2 = Y * Y
    H = Y2 @ Y2.T
    P = (G * G - H) / 2
    np.fill_diagonal(P, 0.0)
    return P.sum(axis=1)


def _sums_h6(Y):
    rows = _pair_gram_sums(Y)
    cols = _pair_gram_sums(Y.T)
    return rows.sum() / 2, rows, cols


def _sums_hA1(Y):
    # ordered form: sum over i != i', j != j' of Z_ij Y_i'j', Z = Y(Y-1)
    Z = Y * (Y - 1)
    r, c = Y.sum(axis=1), Y.sum(axis=0)
    rz, cz = Z.sum(axis=1), Z.sum(axis=0)
    S, SZ = r.sum(), rz.sum()
    ZY = Z * Y
    total = (SZ * S - rz @ r - cz @ c + ZY.sum()) / 4
    rows = (rz * (S - r) - Z @ c + ZY.sum(axis=1)
            + r * (SZ - rz) - Y @ cz + ZY.sum(axis=1)) / 4
    cols = (cz * (S - c) - Z.T @ r + ZY.sum(axis=0)
            + c * (SZ - cz) - Y.T @ rz + ZY.sum(axis=0)) / 4
    return total, rows, cols


def _sums_hA2(Y):
    # ordered form: sum over i != i', j != j' of Y_ij Y_ij' Y_i'j'
    r, c = Y.sum(axis=1), Y.sum(axis=0)
    R = r[:, None] - Y
    C = c[None, :] - Y
    W = Y * R * C
    total = W.sum() / 4
    V = (Y * R).sum(axis=0)
    P = (Y * C).sum(axis=1)
    Y2 = Y * Y
    rows = (W.sum(axis=1) + Y @ V - (Y2 * R).sum(axis=1)) / 4
    cols = (W.sum(axis=0) + Y.T @ P - (Y2 * C).sum(axis=0)) / 4
    return total, rows, cols


def _sums_hA(Y):
    t1, r1, c1 = _sums_hA1(Y)
    t2, r2, c2 = _sums_hA2(Y)
    return t1 - 2 * t2, r1 - 2 * r2, c1 - 2 * c2


FAST_SUMS = {
    "hD": _sums_hD,
    "h1": _sums_h1,
    "hC": _sums_hC,
    "h2": _sums_h2,
    "h6": _sums_h6,
    "hA1": _sums_hA1,
    "hA2": _sums_hA2,
    "hA": _sums_hA,
}


def u_fast_sums(Y, h: K.Kernel) -> UStatResult:
    """Same result as ``u_naive`` for kernels carrying a fast-path tag."""
    arr = as_array(Y)
    _check(arr, h)
    if h.fast_path not in FAST_SUMS:
        raise UnknownKernelError(f"kernel {h.id} has no fast path; use u_naive")
    m, n = arr.shape
    total, rows, cols = FAST_SUMS[h.fast_path](arr)
    total_terms = term_count(m, n, h.p, h.q)
    return UStatResult(float(total) / total_terms, np.asarray(rows, dtype=float),
                       np.asarray(cols, dtype=float), total_terms, m, n, h.p, h.q, h.id, "fast")


def u_statistic(Y, h, fast: bool = True, force: bool = False, threads: int | None = None) -> UStatResult:
    """Dispatch to the fast path when the kernel has one, else enumerate."""
    h = K.resolve(h)
    if fast and h.fast_path in FAST_SUMS:
        return u_fast_sums(Y, h)
    return u_naive(Y, h, force=force, threads=threads)


# ---------------------------------------------------------------------------
# Matrix-operation U-statistics for the kernels used by the benchmarks
# ---------------------------------------------------------------------------

FAST_IDS = ("h1", "h2", "hB", "hC", "hD")


def _fast_id(kernel_id) -> str:
    kid = kernel_id.id if isinstance(kernel_id, K.Kernel) else kernel_id
    if kid not in FAST_IDS:
        raise UnknownKernelError(f"no matrix-operation path for {kid!r} (supported: {FAST_IDS}); use u_naive")
    return "h1" if kid == "hB" else kid


def u_fast(Y, kernel_id) -> float:
    """U-statistic from Gram-matrix traces and sums.

    h1: (|Y'Y|_1 - tr Y'Y) / (m n (n-1));  h2: the inclusion-exclusion form
    over |Y|_1^2, |Y'Y|_1, |YY'|_1 and the traces; hC is h1 on the transpose.
    """
    kid = _fast_id(kernel_id)
    Y = as_array(Y)
    m, n = Y.shape
    if kid == "hD":
        return float(Y.mean())
    if kid == "hC":
        return u_fast(Y.T, "h1")
    if kid == "h1":
        if n < 2:
            raise SizeError("h1 needs at least 2 columns")
        G = Y.T @ Y
        return float((G.sum() - np.trace(G)) / (m * n * (n - 1)))
    if m < 2 or n < 2:
        raise SizeError("h2 needs at least 2 rows and 2 columns")
    Gc = Y.T @ Y
    Gr = Y @ Y.T
    num = (Y.sum() ** 2 - Gc.sum() + np.trace(Gc) - Gr.sum() + np.trace(Gr) - (Y * Y).sum())
    return float(num / (m * (m - 1) * n * (n - 1)))


def u_fast_leave_one_out(Y, kernel_id, axis: str) -> np.ndarray:
    """All U-statistics of the matrix with one row (or column) removed.

    Each entry equals ``u_fast`` on the reduced matrix; the Gram quantities
    are downdated instead of recomputed, which costs O(mn) for the whole set.
    """
    kid = _fast_id(kernel_id)
    Y = as_array(Y)
    if axis not in ("row", "col"):
        raise ValidationError(f"axis must be 'row' or 'col', got {axis!r}")
    if kid == "hC":
        return u_fast_leave_one_out(Y.T, "h1", "col" if axis == "row" else "row")
    if axis == "col":
        if kid == "h1":
            return _h1_drop_col(Y)
        return u_fast_leave_one_out(Y.T, kid, "row")
    m, n = Y.shape
    r = Y.sum(axis=1)
    q_r = (Y * Y).sum(axis=1)
    if kid == "hD":
        if m < 2:
            raise SizeError("cannot drop a row from a single-row matrix")
        return (Y.sum() - r) / ((m - 1) * n)
    if kid == "h1":
        if m < 2 or n < 2:
            raise SizeError("h1 leave-one-row-out needs m >= 2, n >= 2")
        num = r @ r - q_r.sum()
        return (num - (r * r - q_r)) / ((m - 1) * n * (n - 1))
    # h2
    if m < 3 or n < 2:
        raise SizeError("h2 leave-one-row-out needs m >= 3, n >= 2")
    c = Y.sum(axis=0)
    S = r.sum()
    Sp = S - r
    sum_r2 = r @ r - r * r
    sum_c2 = c @ c - 2 * (Y @ c) + q_r
    Qp = q_r.sum() - q_r
    return (Sp * Sp - sum_r2 - sum_c2 + Qp) / ((m - 1) * (m - 2) * n * (n - 1))


def _h1_drop_col(Y):
    m, n = Y.shape
    if n < 3:
        raise SizeError("h1 leave-one-column-out needs n >= 3")
    r = Y.sum(axis=1)
    Y2 = Y * Y
    q_c = Y2.sum(axis=0)
    num = r @ r - 2 * (Y.T @ r) + q_c - (Y2.sum() - q_c)
    return num / (m * (n - 1) * (n - 2))


# ---------------------------------------------------------------------------
# Leave-one-out from a full result
# ---------------------------------------------------------------------------

def u_leave_one_out_all(base: UStatResult, axis: str) -> np.ndarray:
    """U-statistics with each row (or column) removed, from the stored sums."""
    if axis == "row":
        if base.m - 1 < base.p:
            raise SizeError(f"dropping a row leaves {base.m - 1} rows, kernel needs {base.p}")
        denom = binom_exact(base.m - 1, base.p) * binom_exact(base.n, base.q)
        sums = base.row_sums
    elif axis == "col":
        if base.n - 1 < base.q:
            raise SizeError(f"dropping a column leaves {base.n - 1} columns, kernel needs {base.q}")
        denom = binom_exact(base.m, base.p) * binom_exact(base.n - 1, base.q)
        sums = base.col_sums
    else:
        raise ValidationError(f"axis must be 'row' or 'col', got {axis!r}")
    return (base.total - sums) / denom


def u_leave_one_out(base: UStatResult, Y, h, axis: str, index: int) -> float:
    """U-statistic with row (or column) ``index`` removed, without re-enumerating."""
    size = base.m if axis == "row" else base.n
    if not 0 <= index < size:
        raise SizeError(f"{axis} index {index} out of range for size {size}")
    return float(u_leave_one_out_all(base, axis)[index])
