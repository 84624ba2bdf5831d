"""Row-by-row SpGEMM baselines and the brute-force reference oracle.

C = A*B is computed row by row: the rows of B selected by the nonzeros of row
i of A are scaled and summed.  Two baselines differ only in the accumulator:

* dense accumulation: scatter-add into a full-width buffer (insertion-order
  output, canonicalized afterwards);
* expand-sort-compress: materialize the row's intermediate product, then sort
  and merge it.

Both run a precise-prediction symbolic phase first: a value-free pass that
counts the exact nonzeros of every output row, prefix-summed into C.row_ptr,
so the numeric phase writes into exactly-sized arrays with no synchronization.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .accumulators import DenseAccumulator, dense_accumulate, sort_accumulate
from .errors import ContractViolation, InputError
from .matrix import CsrMatrix, RowStats, canonicalize_csr, gather_concat
from .util import col_index_dtype


@dataclass
class SpgemmResult:
    C: CsrMatrix
    phase_timings: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)

    @property
    def total_seconds(self) -> float:
        return sum(self.phase_timings.values())


def _check_dims(A: CsrMatrix, B: CsrMatrix):
    if A.n_cols != B.n_rows:
        raise InputError(f"dimension mismatch: A is {A.n_rows}x{A.n_cols}, B is {B.n_rows}x{B.n_cols}")


def gather_row_product(A: CsrMatrix, B: CsrMatrix, i: int, with_vals: bool = True):
    """Concatenated intermediate product of row i: every B row hit by A's row i.

    Returns (cols, vals) with cols int64; vals is None when with_vals is False.
    Order is the Gustavson traversal order: A's nonzeros left to right, each
    B row left to right.
    """
    a0, a1 = int(A.row_ptr[i]), int(A.row_ptr[i + 1])
    js = A.col[a0:a1].astype(np.int64)
    starts = B.row_ptr[js]
    lens = B.row_ptr[js + 1] - starts
    cols = gather_concat(B.col, starts, lens).astype(np.int64, copy=False)
    if not with_vals:
        return cols, None
    vals = gather_concat(B.val, starts, lens) * np.repeat(A.val[a0:a1], lens)
    return cols, vals


def spgemm_reference(A: CsrMatrix, B: CsrMatrix) -> CsrMatrix:
    """Ground-truth SpGEMM for test-scale matrices.

    Direct evaluation with a dense scratch row and explicit structural-support
    tracking, drained in ascending column order.  Kept deliberately simple and
    independent of the production kernels; restricted to B with at most 2^16
    columns.
    """
    _check_dims(A, B)
    if B.n_cols > 2**16:
        raise InputError("reference oracle is restricted to <= 2^16 columns")
    scratch = np.zeros(B.n_cols, dtype=np.float64)
    support = np.zeros(B.n_cols, dtype=bool)
    out_rows = []
    counts = np.zeros(A.n_rows, dtype=np.int64)
    for i in range(A.n_rows):
        for j in range(int(A.row_ptr[i]), int(A.row_ptr[i + 1])):
            b0, b1 = int(B.row_ptr[A.col[j]]), int(B.row_ptr[int(A.col[j]) + 1])
            bc = B.col[b0:b1].astype(np.int64)
            scratch[bc] += A.val[j] * B.val[b0:b1]
            support[bc] = True
        nz = np.flatnonzero(support)
        counts[i] = nz.size
        out_rows.append((nz, scratch[nz].copy()))
        scratch[nz] = 0.0
        support[nz] = False
    row_ptr = np.zeros(A.n_rows + 1, dtype=np.int64)
    row_ptr[1:] = np.cumsum(counts)
    col = np.concatenate([c for c, _ in out_rows]) if out_rows else np.empty(0, np.int64)
    val = np.concatenate([v for _, v in out_rows]) if out_rows else np.empty(0, np.float64)
    return CsrMatrix(
        A.n_rows, B.n_cols, row_ptr, col.astype(col_index_dtype(B.n_cols)), val
    )


def row_intermediate_stats(A: CsrMatrix, B: CsrMatrix) -> RowStats:
    """Per-row intermediate-product size and column range, without materializing it.

    inter_size[i] = sum of nnz of the B rows referenced by row i of A.
    min_col/max_col span the union of those B rows' supports, derived from each
    B row's first and last column index.  Empty rows report (0, 0, -1).
    """
    _check_dims(A, B)
    n = A.n_rows
    lens_b = np.diff(B.row_ptr)
    per_nz = lens_b[A.col.astype(np.int64)] if A.nnz else np.empty(0, np.int64)
    cs = np.r_[0, np.cumsum(per_nz)]
    inter = cs[A.row_ptr[1:]] - cs[A.row_ptr[:-1]]

    min_col = np.zeros(n, dtype=np.int64)
    max_col = np.full(n, -1, dtype=np.int64)
    if A.nnz:
        # first/last column of each B row; empty B rows get +-inf sentinels
        first_b = np.full(B.n_rows, B.n_cols, dtype=np.int64)
        last_b = np.full(B.n_rows, -1, dtype=np.int64)
        has = lens_b > 0
        first_b[has] = B.col[B.row_ptr[:-1][has]]
        last_b[has] = B.col[B.row_ptr[1:][has] - 1]
        fa = first_b[A.col.astype(np.int64)]
        la = last_b[A.col.astype(np.int64)]
        # rows whose start == nnz_A form an all-empty suffix; reduceat cannot
        # take those starts, and dropping them leaves every real segment intact
        sa = A.row_ptr[:-1]
        k = int(np.searchsorted(sa, A.nnz, side="left"))
        mn = np.full(n, B.n_cols, dtype=np.int64)
        mx = np.full(n, -1, dtype=np.int64)
        if k:
            mn[:k] = np.minimum.reduceat(fa, sa[:k])
            mx[:k] = np.maximum.reduceat(la, sa[:k])
        nonempty = inter > 0
        min_col[nonempty] = mn[nonempty]
        max_col[nonempty] = mx[nonempty]
    return RowStats(inter_size=inter.astype(np.int64), min_col=min_col, max_col=max_col)


def _row_blocks(n_rows: int, threads: int):
    """Contiguous row blocks for dynamic scheduling; ~4 blocks per worker."""
    if n_rows == 0:
        return []
    n_blocks = max(1, min(n_rows, threads * 4))
    edges = np.linspace(0, n_rows, n_blocks + 1, dtype=np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if a < b]


def _run_blocks(blocks, worker, threads: int):
    if threads <= 1 or len(blocks) <= 1:
        for blk in blocks:
            worker(blk)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(worker, blocks))


def gustavson_dense_symbolic(A: CsrMatrix, B: CsrMatrix, threads: int = 1) -> np.ndarray:
    """Precise-prediction symbolic phase: exact per-row nnz, prefix-summed."""
    _check_dims(A, B)
    counts = np.zeros(A.n_rows, dtype=np.int64)

    def work(blk):
        lo, hi = blk
        for i in range(lo, hi):
            cols, _ = gather_row_product(A, B, i, with_vals=False)
            if cols.size:
                counts[i] = np.unique(cols).size

    _run_blocks(_row_blocks(A.n_rows, threads), work, threads)
    row_ptr = np.zeros(A.n_rows + 1, dtype=np.int64)
    row_ptr[1:] = np.cumsum(counts)
    return row_ptr


def _alloc_c(A, B, row_ptr):
    nnz = int(row_ptr[-1])
    return CsrMatrix(
        A.n_rows,
        B.n_cols,
        row_ptr,
        np.empty(nnz, dtype=col_index_dtype(B.n_cols)),
        np.empty(nnz, dtype=np.float64),
        canonical=False,
    )


def gustavson_dense_numeric(A: CsrMatrix, B: CsrMatrix, row_ptr: np.ndarray, threads: int = 1) -> SpgemmResult:
    """Numeric phase with a full-width dense accumulator per worker.

    Rows are written in insertion order first, then canonicalized; the
    canonicalization is reported as the 'post' phase.
    """
    _check_dims(A, B)
    if row_ptr.shape != (A.n_rows + 1,) or row_ptr[0] != 0:
        raise ContractViolation("row_ptr does not come from a symbolic pass of (A, B)")
    C = _alloc_c(A, B, row_ptr)
    t0 = time.perf_counter()

    def work(blk):
        lo, hi = blk
        acc = DenseAccumulator(max(B.n_cols, 1))
        for i in range(lo, hi):
            cols, vals = gather_row_product(A, B, i)
            out_cols, out_vals = dense_accumulate(cols, vals, acc)
            c0, c1 = int(row_ptr[i]), int(row_ptr[i + 1])
            if out_cols.size != c1 - c0:
                raise ContractViolation(f"row {i}: symbolic predicted {c1 - c0} nnz, numeric produced {out_cols.size}")
            C.col[c0:c1] = out_cols
            C.val[c0:c1] = out_vals

    _run_blocks(_row_blocks(A.n_rows, threads), work, threads)
    t1 = time.perf_counter()
    canonicalize_csr(C)
    t2 = time.perf_counter()
    stats = row_intermediate_stats(A, B)
    return SpgemmResult(
        C,
        phase_timings={"numeric": t1 - t0, "post": t2 - t1},
        counters={"inter_prod_size": int(stats.inter_size.sum()), "nnz_c": C.nnz},
    )


def gustavson_esc_numeric(A: CsrMatrix, B: CsrMatrix, row_ptr: np.ndarray, threads: int = 1) -> SpgemmResult:
    """Numeric phase via expand-sort-compress: per-row sort-merge of the product."""
    _check_dims(A, B)
    if row_ptr.shape != (A.n_rows + 1,) or row_ptr[0] != 0:
        raise ContractViolation("row_ptr does not come from a symbolic pass of (A, B)")
    C = _alloc_c(A, B, row_ptr)
    buffered = np.zeros(A.n_rows, dtype=np.int64)
    t0 = time.perf_counter()

    def work(blk):
        lo, hi = blk
        for i in range(lo, hi):
            cols, vals = gather_row_product(A, B, i)
            buffered[i] = cols.size
            out_cols, out_vals = sort_accumulate(cols, vals)
            c0, c1 = int(row_ptr[i]), int(row_ptr[i + 1])
            if out_cols.size != c1 - c0:
                raise ContractViolation(f"row {i}: symbolic predicted {c1 - c0} nnz, numeric produced {out_cols.size}")
            C.col[c0:c1] = out_cols
            C.val[c0:c1] = out_vals

    _run_blocks(_row_blocks(A.n_rows, threads), work, threads)
    t1 = time.perf_counter()
    C.canonical = True  # sort accumulation emits ascending columns
    return SpgemmResult(
        C,
        phase_timings={"numeric": t1 - t0, "post": 0.0},
        counters={"inter_prod_size": int(buffered.sum()), "nnz_c": C.nnz},
    )


def _timed_pipeline(A, B, numeric, threads):
    t0 = time.perf_counter()
    row_ptr = gustavson_dense_symbolic(A, B, threads=threads)
    t1 = time.perf_counter()
    res = numeric(A, B, row_ptr, threads=threads)
    res.phase_timings = {"setup": 0.0, "symbolic": t1 - t0, **res.phase_timings}
    return res


def gustavson_dense(A: CsrMatrix, B: CsrMatrix, threads: int = 1) -> SpgemmResult:
    """Symbolic + numeric dense-accumulation Gustavson pipeline."""
    return _timed_pipeline(A, B, gustavson_dense_numeric, threads)


def gustavson_esc(A: CsrMatrix, B: CsrMatrix, threads: int = 1) -> SpgemmResult:
    """Symbolic + numeric expand-sort-compress pipeline."""
    return _timed_pipeline(A, B, gustavson_esc_numeric, threads)
