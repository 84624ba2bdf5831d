"""Two-level locality-generating SpGEMM.

The intermediate product of each output row is reordered into discrete
column-range chunks sized so the accumulator and reorder metadata stay in the
L2 cache, then each chunk is accumulated independently.  Rows are categorized
up front by their intermediate-product statistics:

1. sort: few enough intermediate elements to sort-accumulate directly;
2. dense: the column range of the product fits a dense window in L2;
3. fine level: one reorder pass (histogram, prefix sum, stable scatter with a
   chunk-local index shift) brings every chunk into accumulator range;
4. coarse level: the fine-level working set itself exceeds L2, so an
   outer-product pass over batches of rows first splits the column space into
   coarse chunks, and the fine level runs inside each coarse chunk.

Rows of C are computed category-first.  The symbolic phase runs the same
traversal with value-free accumulators and yields exact per-row nonzero
counts; the numeric phase then fills exactly-sized output arrays with no
synchronization between workers.
"""

import time
from dataclasses import dataclass

import numpy as np

from .accumulators import (
    Accum,
    AccumThresholds,
    DenseAccumulator,
    dense_accumulate,
    dense_accumulate_symbolic,
    merge_chunks_for_sort,
    select_accumulator,
    sort_accumulate,
)
from .errors import ContractViolation, OverBudgetError
from .gustavson import (
    SpgemmResult,
    _check_dims,
    _row_blocks,
    _run_blocks,
    gather_row_product,
    row_intermediate_stats,
)
from .matrix import CsrMatrix, RowStats, csr_rows_to_csc, stable_scatter_positions
from .planner import NUMERIC, SYMBOLIC, ChunkPlan, SystemParams, compute_chunk_plan, detect_system_params
from .util import ceil_pow2, col_index_bytes, col_index_dtype


@dataclass
class RowCategories:
    sort_rows: np.ndarray
    dense_rows: np.ndarray
    fine_rows: np.ndarray
    coarse_rows: np.ndarray

    @property
    def counts(self) -> dict:
        return {
            "sort": int(self.sort_rows.size),
            "dense": int(self.dense_rows.size),
            "fine": int(self.fine_rows.size),
            "coarse": int(self.coarse_rows.size),
        }


def categorize_rows(
    stats: RowStats, plan: ChunkPlan, sys: SystemParams, thresholds: AccumThresholds
) -> RowCategories:
    """Assign every row to sort / dense / fine / coarse; first matching rule wins.

    The dense rule prices the window at the numeric-phase accumulator cost
    (value + bitmap byte) since that is when the window must actually fit; the
    fine/coarse split comes from the plan, which both phases share.  Rows with
    an empty intermediate product land in sort.
    """
    inter = stats.inter_size
    window_bytes = stats.range_len * (sys.val_bytes + 1)
    is_sort = inter < thresholds.sort_dense_crossover
    is_dense = ~is_sort & (window_bytes <= sys.l2_bytes)
    rest = ~is_sort & ~is_dense
    if plan.use_coarse:
        is_fine = np.zeros_like(is_sort)
        is_coarse = rest
    else:
        is_fine = rest
        is_coarse = np.zeros_like(is_sort)
    return RowCategories(
        sort_rows=np.flatnonzero(is_sort),
        dense_rows=np.flatnonzero(is_dense),
        fine_rows=np.flatnonzero(is_fine),
        coarse_rows=np.flatnonzero(is_coarse),
    )


class WorkerScratch:
    """Per-worker accumulators, reused across rows; never shared between workers."""

    def __init__(self, plan: ChunkPlan, thresholds: AccumThresholds):
        self.thresholds = thresholds
        self.fine_dense = DenseAccumulator(plan.chunk_len_fine)
        self._window = None

    def window_dense(self, need: int) -> DenseAccumulator:
        """Dense window accumulator, grown geometrically to at least `need` slots."""
        if self._window is None or self._window.capacity < need:
            self._window = DenseAccumulator(ceil_pow2(max(need, 1024)))
        return self._window


class _RowEmitter:
    """Writes accumulated (column, value) groups of one row into C's segment."""

    __slots__ = ("C", "row", "pos", "end")

    def __init__(self, C: CsrMatrix):
        self.C = C
        self.row = -1
        self.pos = 0
        self.end = 0

    def start(self, row: int, lo: int, hi: int):
        self.row, self.pos, self.end = row, lo, hi

    def emit(self, base: int, cols: np.ndarray, vals: np.ndarray):
        k = cols.size
        if self.pos + k > self.end:
            raise ContractViolation(
                f"row {self.row}: numeric phase emits more than the symbolic count"
            )
        self.C.col[self.pos : self.pos + k] = cols + base
        self.C.val[self.pos : self.pos + k] = vals
        self.pos += k

    def finish(self):
        if self.pos != self.end:
            raise ContractViolation(
                f"row {self.row}: numeric phase emitted fewer entries than the "
                f"symbolic count ({self.end - self.pos} missing)"
            )


def _accumulate_chunks(col_f, val_f, offsets, plan, scratch, emit, base) -> int:
    """Accumulate reordered fine-level chunks; returns the distinct-column count.

    Dense-selected chunks drain individually (output canonicalized to ascending
    columns).  Maximal runs of sort-selected chunks are regrouped toward the
    sort sweet spot; a group spanning several chunks sorts on composite keys
    (chunk offset + local index) so its output stays globally ascending.
    """
    numeric = val_f is not None
    th = scratch.thresholds
    n = plan.n_chunks_fine
    cl = plan.chunk_len_fine
    sizes = np.diff(offsets)
    total = 0
    i = 0
    while i < n:
        if select_accumulator(int(sizes[i]), th) is Accum.DENSE:
            s, e = int(offsets[i]), int(offsets[i + 1])
            if numeric:
                oc, ov = dense_accumulate(col_f[s:e], val_f[s:e], scratch.fine_dense)
                order = np.argsort(oc)
                emit(base + i * cl, oc[order], ov[order])
                total += oc.size
            else:
                total += dense_accumulate_symbolic(col_f[s:e], scratch.fine_dense)
            i += 1
            continue
        j = i
        while j < n and select_accumulator(int(sizes[j]), th) is Accum.SORT:
            j += 1
        groups = merge_chunks_for_sort(sizes[i:j], th.sort_sweet_spot)
        for a, b in zip(groups[:-1], groups[1:]):
            s, e = int(offsets[i + a]), int(offsets[i + b])
            if s == e:
                continue
            if b - a == 1:
                keys = col_f[s:e]
            else:
                keys = col_f[s:e] + np.repeat(
                    np.arange(b - a, dtype=np.int64) * cl, sizes[i + a : i + b]
                )
            if numeric:
                oc, ov = sort_accumulate(keys, val_f[s:e])
                emit(base + (i + a) * cl, oc, ov)
                total += oc.size
            else:
                total += int(np.unique(keys).size)
        i = j
    return total


def fine_level_chunk(cols, vals, plan: ChunkPlan, scratch: WorkerScratch, emit, base: int = 0) -> int:
    """Histogram, prefix-sum, reorder, and accumulate one chunk-local index stream.

    `cols` must already be in chunk-local range [0, n_chunks_fine *
    chunk_len_fine).  The reorder is stable: elements keep their input order
    within each chunk.  Emits (base + fine-chunk offset, columns, values) per
    accumulated group; returns the number of distinct columns.
    """
    cols = np.asarray(cols, dtype=np.int64)
    if cols.size == 0:
        return 0
    n = plan.n_chunks_fine
    chunks = cols >> plan.shift_fine
    if int(chunks.max()) >= n or int(cols.min()) < 0:
        raise ContractViolation("column index outside the planned fine-level span")
    counts = np.bincount(chunks, minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    heads = offsets[:-1].copy()
    pos = stable_scatter_positions(chunks, heads)
    col_f = np.empty_like(cols)
    col_f[pos] = cols & (plan.chunk_len_fine - 1)
    val_f = None
    if vals is not None:
        val_f = np.empty(vals.size, dtype=np.float64)
        val_f[pos] = vals
    return _accumulate_chunks(col_f, val_f, offsets, plan, scratch, emit, base)


def fine_level_row(A: CsrMatrix, B: CsrMatrix, row: int, plan: ChunkPlan, scratch: WorkerScratch, emit) -> int:
    """Fine-level algorithm reading A and B directly (no unordered product buffer).

    Two passes over the referenced B rows replace the single pass over a
    materialized stream: one to histogram the chunk occupancies, one to
    multiply and scatter straight into reordered position.
    """
    numeric = emit is not None
    a0, a1 = int(A.row_ptr[row]), int(A.row_ptr[row + 1])
    js = A.col[a0:a1].astype(np.int64)
    if js.size == 0:
        return 0
    n = plan.n_chunks_fine
    cl = plan.chunk_len_fine
    starts = B.row_ptr[js]
    ends = B.row_ptr[js + 1]

    counts = np.zeros(n, dtype=np.int64)
    for t in range(js.size):
        bc = B.col[starts[t] : ends[t]].astype(np.int64)
        h = np.bincount(bc >> plan.shift_fine, minlength=n)
        if h.size > n:
            raise ContractViolation("column index outside the planned fine-level span")
        counts += h
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    total = int(offsets[-1])
    if total == 0:
        return 0
    col_f = np.empty(total, dtype=np.int64)
    val_f = np.empty(total, dtype=np.float64) if numeric else None
    heads = offsets[:-1].copy()
    for t in range(js.size):
        bc = B.col[starts[t] : ends[t]].astype(np.int64)
        pos = stable_scatter_positions(bc >> plan.shift_fine, heads)
        col_f[pos] = bc & (cl - 1)
        if numeric:
            val_f[pos] = A.val[a0 + t] * B.val[starts[t] : ends[t]]
    return _accumulate_chunks(col_f, val_f, offsets, plan, scratch, emit, 0)


@dataclass
class CoarseBatch:
    """Reordered intermediate product of one batch of coarse-level rows."""

    coarse_rows_c: np.ndarray  # global row ids in this batch
    coarse_rows_b: np.ndarray  # referenced B rows (ascending)
    counts_coarse: np.ndarray  # (n_batch_rows, n_chunks_coarse)
    offsets_coarse: np.ndarray  # (n_batch_rows, n_chunks_coarse + 1), row-linked
    col_coarse: np.ndarray  # chunk-local column indices
    val_coarse: np.ndarray  # None in the symbolic phase


def build_coarse_batches(coarse_rows, stats: RowStats, plan: ChunkPlan, sys: SystemParams, bytes_per_element: int):
    """Greedily pack coarse rows into batches under the memory and L2 limits.

    A batch closes when buffering the next row's intermediate product would
    exceed the memory budget, or when the per-batch chunk metadata (histogram
    and offset rows plus two active cache lines per nonempty chunk) would
    exceed the L2 size.  A single row that alone exceeds the memory budget is
    an error.
    """
    coarse_rows = np.asarray(coarse_rows, dtype=np.int64)
    ncc = plan.n_chunks_coarse
    budget = sys.memory_budget_bytes
    batches = []
    cur = []
    cur_bytes = 0
    cur_meta = 0
    for r in coarse_rows:
        isz = int(stats.inter_size[r])
        row_bytes = isz * bytes_per_element
        if row_bytes > budget:
            raise OverBudgetError(
                f"row {r}: buffering {isz} intermediate elements needs {row_bytes} bytes, "
                f"over the {budget}-byte memory budget"
            )
        row_meta = (
            ncc * sys.histo_type_bytes
            + (ncc + 1) * sys.prefix_sum_type_bytes
            + 2 * sys.cache_line_bytes * min(ncc, isz)
        )
        if cur and (cur_bytes + row_bytes > budget or cur_meta + row_meta > sys.l2_bytes):
            batches.append(np.asarray(cur, dtype=np.int64))
            cur, cur_bytes, cur_meta = [], 0, 0
        cur.append(int(r))
        cur_bytes += row_bytes
        cur_meta += row_meta
    if cur:
        batches.append(np.asarray(cur, dtype=np.int64))
    return batches


def build_coarse_chunks(A: CsrMatrix, B: CsrMatrix, batch_rows, plan: ChunkPlan, numeric: bool) -> CoarseBatch:
    """Outer-product pass: reorder a whole batch's intermediate product by coarse chunk.

    A CSC view of the batch rows of A drives the traversal (B rows ascending,
    referencing A rows inner, B columns innermost); a histogram and row-linked
    prefix sum place every (row, chunk) bucket, then a stable scatter fills the
    buffers with chunk-local indices and multiplied values.
    """
    batch_rows = np.asarray(batch_rows, dtype=np.int64)
    csc = csr_rows_to_csc(A, batch_rows)
    rows_b = np.flatnonzero(np.diff(csc.col_ptr) > 0)
    nb = batch_rows.size
    ncc = plan.n_chunks_coarse
    clc = plan.chunk_len_coarse

    counts_flat = np.zeros(nb * ncc, dtype=np.int64)
    for i in rows_b:
        bc = B.col[B.row_ptr[i] : B.row_ptr[i + 1]].astype(np.int64)
        if bc.size == 0:
            continue
        ch = bc >> plan.shift_coarse
        if int(ch.max()) >= ncc:
            raise ContractViolation("column index outside the planned coarse-level span")
        lr = csc.row[csc.col_ptr[i] : csc.col_ptr[i + 1]]
        buckets = (lr[:, None] * ncc + ch[None, :]).ravel()
        counts_flat += np.bincount(buckets, minlength=nb * ncc)

    offsets_flat = np.zeros(nb * ncc + 1, dtype=np.int64)
    np.cumsum(counts_flat, out=offsets_flat[1:])
    total = int(offsets_flat[-1])
    col_coarse = np.empty(total, dtype=np.int64)
    val_coarse = np.empty(total, dtype=np.float64) if numeric else None

    heads = offsets_flat[:-1].copy()
    for i in rows_b:
        b0, b1 = int(B.row_ptr[i]), int(B.row_ptr[i + 1])
        if b0 == b1:
            continue
        bc = B.col[b0:b1].astype(np.int64)
        ch = bc >> plan.shift_coarse
        lr = csc.row[csc.col_ptr[i] : csc.col_ptr[i + 1]]
        buckets = (lr[:, None] * ncc + ch[None, :]).ravel()
        pos = stable_scatter_positions(buckets, heads)
        col_coarse[pos] = np.tile(bc & (clc - 1), lr.size)
        if numeric:
            av = csc.val[csc.col_ptr[i] : csc.col_ptr[i + 1]]
            val_coarse[pos] = (av[:, None] * B.val[b0:b1][None, :]).ravel()

    offsets = np.empty((nb, ncc + 1), dtype=np.int64)
    if nb:
        offsets[:, :-1] = offsets_flat[:-1].reshape(nb, ncc)
        offsets[:, -1] = offsets_flat[ncc::ncc]
    return CoarseBatch(
        coarse_rows_c=batch_rows,
        coarse_rows_b=rows_b,
        counts_coarse=counts_flat.reshape(nb, ncc),
        offsets_coarse=offsets,
        col_coarse=col_coarse,
        val_coarse=val_coarse,
    )


def coarse_level_batch(A, B, batch_rows, plan, scratch, emit_row=None) -> np.ndarray:
    """Process one coarse batch: generate all coarse chunks, then accumulate.

    All chunks of the batch are built before any accumulation; the fine level
    then runs depth-first per (row, coarse chunk).  ``emit_row(row)`` must
    return the numeric emit callback for that row, or be None for the symbolic
    phase.  Returns the per-row distinct-column counts.
    """
    numeric = emit_row is not None
    batch = build_coarse_chunks(A, B, batch_rows, plan, numeric)
    ncc = plan.n_chunks_coarse
    clc = plan.chunk_len_coarse
    counts = np.zeros(len(batch.coarse_rows_c), dtype=np.int64)
    for li, row in enumerate(batch.coarse_rows_c):
        emit = emit_row(int(row)) if numeric else None
        for j in range(ncc):
            s, e = int(batch.offsets_coarse[li, j]), int(batch.offsets_coarse[li, j + 1])
            if s == e:
                continue
            counts[li] += fine_level_chunk(
                batch.col_coarse[s:e],
                batch.val_coarse[s:e] if numeric else None,
                plan,
                scratch,
                emit,
                base=j * clc,
            )
    return counts


def _distinct_count(cols: np.ndarray) -> int:
    """Value-free accumulation: the exact nonzero count of one output row."""
    return int(np.unique(cols).size) if cols.size else 0


def _coarse_bytes_per_element(B: CsrMatrix, sys: SystemParams) -> int:
    # one buffered intermediate element = column index + value; shared by both
    # phases so batch boundaries are identical
    return col_index_bytes(B.n_cols) + sys.val_bytes


def magnus_symbolic(A, B, plan, cats, stats, sys, thresholds, threads: int = 1) -> np.ndarray:
    """Category-first value-free pass; returns the exact C.row_ptr."""
    _check_dims(A, B)
    counts = np.zeros(A.n_rows, dtype=np.int64)

    direct_rows = np.concatenate([cats.sort_rows, cats.dense_rows])

    def direct_work(blk):
        lo, hi = blk
        for r in direct_rows[lo:hi]:
            cols, _ = gather_row_product(A, B, int(r), with_vals=False)
            counts[r] = _distinct_count(cols)

    _run_blocks(_row_blocks(direct_rows.size, threads), direct_work, threads)

    def fine_work(blk):
        lo, hi = blk
        scratch = WorkerScratch(plan, thresholds)
        for r in cats.fine_rows[lo:hi]:
            counts[r] = fine_level_row(A, B, int(r), plan, scratch, None)

    _run_blocks(_row_blocks(cats.fine_rows.size, threads), fine_work, threads)

    if cats.coarse_rows.size:
        batches = build_coarse_batches(
            cats.coarse_rows, stats, plan, sys, _coarse_bytes_per_element(B, sys)
        )

        def coarse_work(batch):
            scratch = WorkerScratch(plan, thresholds)
            counts[batch] = coarse_level_batch(A, B, batch, plan, scratch, None)

        _run_blocks(batches, coarse_work, threads)

    row_ptr = np.zeros(A.n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    return row_ptr


def magnus_numeric(A, B, row_ptr, plan, cats, stats, sys, thresholds, threads: int = 1) -> SpgemmResult:
    """Category-first numeric pass filling C exactly; output rows are canonical."""
    _check_dims(A, B)
    if row_ptr.shape != (A.n_rows + 1,) or row_ptr[0] != 0:
        raise ContractViolation("row_ptr does not come from a symbolic pass of (A, B)")
    nnz = int(row_ptr[-1])
    C = CsrMatrix(
        A.n_rows,
        B.n_cols,
        row_ptr,
        np.empty(nnz, dtype=col_index_dtype(B.n_cols)),
        np.empty(nnz, dtype=np.float64),
        canonical=True,
    )

    def write_row(r, oc, ov):
        c0, c1 = int(row_ptr[r]), int(row_ptr[r + 1])
        if oc.size != c1 - c0:
            raise ContractViolation(
                f"row {r}: symbolic predicted {c1 - c0} nnz, numeric produced {oc.size}"
            )
        C.col[c0:c1] = oc
        C.val[c0:c1] = ov

    def sort_work(blk):
        lo, hi = blk
        for r in cats.sort_rows[lo:hi]:
            cols, vals = gather_row_product(A, B, int(r))
            oc, ov = sort_accumulate(cols, vals)
            write_row(r, oc, ov)

    _run_blocks(_row_blocks(cats.sort_rows.size, threads), sort_work, threads)

    def dense_work(blk):
        lo, hi = blk
        scratch = WorkerScratch(plan, thresholds)
        for r in cats.dense_rows[lo:hi]:
            cols, vals = gather_row_product(A, B, int(r))
            mn = int(stats.min_col[r])
            acc = scratch.window_dense(int(stats.range_len[r]))
            oc, ov = dense_accumulate(cols - mn, vals, acc)
            order = np.argsort(oc)
            write_row(r, oc[order] + mn, ov[order])

    _run_blocks(_row_blocks(cats.dense_rows.size, threads), dense_work, threads)

    def fine_work(blk):
        lo, hi = blk
        scratch = WorkerScratch(plan, thresholds)
        emitter = _RowEmitter(C)
        for r in cats.fine_rows[lo:hi]:
            r = int(r)
            emitter.start(r, int(row_ptr[r]), int(row_ptr[r + 1]))
            fine_level_row(A, B, r, plan, scratch, emitter.emit)
            emitter.finish()

    _run_blocks(_row_blocks(cats.fine_rows.size, threads), fine_work, threads)

    n_batches = 0
    if cats.coarse_rows.size:
        batches = build_coarse_batches(
            cats.coarse_rows, stats, plan, sys, _coarse_bytes_per_element(B, sys)
        )
        n_batches = len(batches)

        def coarse_work(batch):
            scratch = WorkerScratch(plan, thresholds)
            emitter = _RowEmitter(C)

            def emit_row(row):
                emitter.start(row, int(row_ptr[row]), int(row_ptr[row + 1]))
                return emitter.emit

            coarse_level_batch(A, B, batch, plan, scratch, emit_row)

        _run_blocks(batches, coarse_work, threads)

    counters = {
        "nnz_c": nnz,
        "inter_prod_size": int(stats.inter_size.sum()),
        "coarse_batches": n_batches,
    }
    counters.update({f"rows_{k}": v for k, v in cats.counts.items()})
    return SpgemmResult(C, phase_timings={}, counters=counters)


def spgemm_magnus(
    A: CsrMatrix,
    B: CsrMatrix,
    sys: SystemParams = None,
    thresholds: AccumThresholds = None,
    threads: int = 1,
    force_fine_only: bool = False,
) -> SpgemmResult:
    """Full pipeline: stats, plans, categorization, symbolic, numeric.

    ``force_fine_only`` disables the coarse level (rows that would need it are
    processed by the fine-level algorithm over the whole column span), which
    reproduces the single-level ablation.
    """
    _check_dims(A, B)
    if sys is None:
        sys = detect_system_params()
    if thresholds is None:
        thresholds = AccumThresholds()
    allow_coarse = not force_fine_only
    m_c = max(B.n_cols, 1)

    t0 = time.perf_counter()
    stats = row_intermediate_stats(A, B)
    plan_sym = compute_chunk_plan(sys, m_c, SYMBOLIC, allow_coarse=allow_coarse)
    plan_num = compute_chunk_plan(sys, m_c, NUMERIC, allow_coarse=allow_coarse)
    cats = categorize_rows(stats, plan_sym, sys, thresholds)
    t1 = time.perf_counter()
    row_ptr = magnus_symbolic(A, B, plan_sym, cats, stats, sys, thresholds, threads)
    t2 = time.perf_counter()
    res = magnus_numeric(A, B, row_ptr, plan_num, cats, stats, sys, thresholds, threads)
    t3 = time.perf_counter()
    res.phase_timings = {
        "setup": t1 - t0,
        "symbolic": t2 - t1,
        "numeric": t3 - t2,
        "post": 0.0,
    }
    return res
