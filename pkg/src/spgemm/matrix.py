"""Compressed sparse row matrices and conversions.

CSR is the universal input/output format of every algorithm in this package:
``row_ptr`` (int64, length n_rows+1), ``col`` (uint32 for up to 2^32 columns,
uint64 beyond), ``val`` (float64).  Generators and final multiplication
results are *canonical*: within each row the column indices are strictly
increasing.  Intermediate products are not and carry ``canonical=False``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .util import col_index_dtype


@dataclass
class CsrMatrix:
    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col: np.ndarray
    val: np.ndarray
    canonical: bool = True

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    def row_slice(self, i):
        """(col, val) views of row i."""
        lo, hi = int(self.row_ptr[i]), int(self.row_ptr[i + 1])
        return self.col[lo:hi], self.val[lo:hi]

    def to_dense(self) -> np.ndarray:
        """Dense copy, for small test matrices only."""
        if self.n_rows * self.n_cols > 2**26:
            raise InputError("to_dense is restricted to small matrices")
        d = np.zeros((self.n_rows, self.n_cols))
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_ptr))
        # += instead of assignment so non-canonical duplicates are summed
        np.add.at(d, (rows, self.col.astype(np.int64)), self.val)
        return d


@dataclass
class CscSubMatrix:
    """Compressed sparse column view of a subset of rows of a CSR matrix.

    ``col_ptr`` spans the full column range of the source; ``row`` holds local
    row ids indexing into ``source_rows``.
    """

    source_rows: np.ndarray
    n_cols: int
    col_ptr: np.ndarray
    row: np.ndarray
    val: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.col_ptr[-1])


@dataclass
class ValidationReport:
    ok: bool
    message: str = "OK"
    index: int = -1

    def __bool__(self):
        return self.ok


def csr_from_arrays(rows, cols, vals, n_rows: int, n_cols: int) -> CsrMatrix:
    """Array-based core of csr_from_triplets: sum duplicates, sort rows by column."""
    if n_rows < 0 or n_cols < 0:
        raise InputError("matrix dimensions must be non-negative")
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if rows.size == 0:
        return CsrMatrix(
            n_rows,
            n_cols,
            np.zeros(n_rows + 1, dtype=np.int64),
            np.empty(0, dtype=col_index_dtype(n_cols)),
            np.empty(0, dtype=np.float64),
        )
    if rows.min() < 0 or rows.max() >= n_rows:
        raise InputError(f"row index out of range [0, {n_rows})")
    if cols.min() < 0 or cols.max() >= n_cols:
        raise InputError(f"column index out of range [0, {n_cols})")
    codes = rows * n_cols + cols
    uniq, inverse = np.unique(codes, return_inverse=True)
    summed = np.bincount(inverse, weights=vals, minlength=uniq.size)
    out_rows = (uniq // n_cols).astype(np.int64)
    out_cols = uniq % n_cols
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    row_ptr[1:] = np.cumsum(np.bincount(out_rows, minlength=n_rows))
    return CsrMatrix(
        n_rows, n_cols, row_ptr, out_cols.astype(col_index_dtype(n_cols)), summed
    )


def csr_from_triplets(triplets, n_rows: int, n_cols: int) -> CsrMatrix:
    """Build a canonical CSR matrix from (row, col, val) triplets.

    Duplicate (row, col) pairs are summed; rows come out column-sorted.
    """
    triplets = list(triplets)
    if not triplets:
        return csr_from_arrays([], [], [], n_rows, n_cols)
    rows, cols, vals = zip(*triplets)
    return csr_from_arrays(rows, cols, vals, n_rows, n_cols)


def validate_csr(m: CsrMatrix) -> ValidationReport:
    """Check all CsrMatrix invariants; report the first violation found."""
    rp = m.row_ptr
    if rp.shape != (m.n_rows + 1,):
        return ValidationReport(False, f"row_ptr length {rp.size} != n_rows+1")
    if rp[0] != 0:
        return ValidationReport(False, "row_ptr[0] != 0", 0)
    diffs = np.diff(rp)
    if diffs.size and diffs.min() < 0:
        i = int(np.argmax(diffs < 0))
        return ValidationReport(False, f"row_ptr decreasing at index {i + 1}", i + 1)
    nnz = int(rp[-1])
    if m.col.size != nnz or m.val.size != nnz:
        return ValidationReport(
            False, f"col/val lengths ({m.col.size}/{m.val.size}) != row_ptr[-1] ({nnz})"
        )
    if nnz:
        cmax = int(m.col.max())
        if cmax >= m.n_cols:
            i = int(np.argmax(m.col == cmax))
            return ValidationReport(False, f"col[{i}] = {cmax} out of range", i)
    if m.canonical and nnz:
        c = m.col.astype(np.int64)
        inner = np.diff(c)
        # entries at row starts may legitimately decrease
        inner[rp[1:-1] - 1] = 1
        if inner.size and inner.min() <= 0:
            i = int(np.argmax(inner <= 0))
            return ValidationReport(
                False, f"columns not strictly increasing within a row at nz {i + 1}", i + 1
            )
    return ValidationReport(True)


def csr_rows_to_csc(source: CsrMatrix, rows) -> CscSubMatrix:
    """Extract the given rows of a CSR matrix as a CSC submatrix.

    Classic counting-sort conversion: histogram the column indices, prefix-sum
    into col_ptr, then scatter.  Scattering in row-major input order leaves each
    column's entries in ascending local-row order.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size:
        if rows.min() < 0 or rows.max() >= source.n_rows:
            raise InputError("row id out of range")
        if np.any(np.diff(rows) <= 0):
            raise InputError("rows must be sorted and unique")
    lens = source.row_ptr[rows + 1] - source.row_ptr[rows] if rows.size else np.empty(0, np.int64)
    total = int(lens.sum())
    col_ptr = np.zeros(source.n_cols + 1, dtype=np.int64)
    row_out = np.empty(total, dtype=np.int64)
    val_out = np.empty(total, dtype=np.float64)
    if total == 0:
        return CscSubMatrix(rows, source.n_cols, col_ptr, row_out, val_out)
    starts = source.row_ptr[rows]
    gather = np.repeat(starts - np.r_[0, np.cumsum(lens)[:-1]], lens) + np.arange(total)
    cols = source.col[gather].astype(np.int64)
    vals = source.val[gather]
    local_rows = np.repeat(np.arange(rows.size), lens)

    col_ptr[1:] = np.cumsum(np.bincount(cols, minlength=source.n_cols))
    heads = col_ptr[:-1].copy()
    pos = stable_scatter_positions(cols, heads)
    row_out[pos] = local_rows
    val_out[pos] = vals
    return CscSubMatrix(rows, source.n_cols, col_ptr, row_out, val_out)


def stable_scatter_positions(buckets: np.ndarray, heads: np.ndarray) -> np.ndarray:
    """Destination positions for a stable scatter into per-bucket regions.

    ``heads[b]`` is the next free slot of bucket b; it is advanced in place.
    Elements sharing a bucket keep their relative input order, which is what
    makes single-threaded reorders bit-deterministic.
    """
    n = buckets.size
    if n == 0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(buckets, kind="stable")
    sb = buckets[order]
    uniq, starts, counts = np.unique(sb, return_index=True, return_counts=True)
    ranks = np.arange(n, dtype=np.int64) - np.repeat(starts, counts)
    pos = np.empty(n, dtype=np.int64)
    pos[order] = heads[sb] + ranks
    heads[uniq] += counts
    return pos


def gather_concat(arr: np.ndarray, starts: np.ndarray, lens: np.ndarray) -> np.ndarray:
    """Concatenate arr[starts[i] : starts[i]+lens[i]] for all i, in order."""
    total = int(lens.sum())
    if total == 0:
        return arr[:0]
    idx = np.repeat(starts - np.r_[0, np.cumsum(lens)[:-1]], lens) + np.arange(total)
    return arr[idx]


def canonicalize_csr(m: CsrMatrix) -> CsrMatrix:
    """Sort each row by column index (stable), in place, and flag the matrix canonical."""
    if m.nnz:
        rows = np.repeat(np.arange(m.n_rows, dtype=np.int64), np.diff(m.row_ptr))
        order = np.lexsort((m.col, rows))
        m.col = m.col[order]
        m.val = m.val[order]
    m.canonical = True
    return m


@dataclass
class RowStats:
    """Per-row intermediate-product statistics (see gustavson.row_intermediate_stats)."""

    inter_size: np.ndarray
    min_col: np.ndarray
    max_col: np.ndarray

    range_len: np.ndarray = field(init=False)

    def __post_init__(self):
        # empty rows carry (min=0, max=-1) so the range length is exactly 0
        self.range_len = self.max_col - self.min_col + 1
