"""Accumulation kernels for intermediate-product chunks.

Two accumulators merge the duplicate column indices of a scaled-row sum:

* dense accumulation: scatter-add into a buffer indexed by column, with a
  companion bitmap tracking occupied slots and an insertion-order list of the
  distinct columns.  Output order is first-occurrence order.
* sort accumulation: stable key sort on the column indices followed by a
  merge of equal keys.  Output order is ascending column.

A chunk picks its accumulator by element count: sorting wins below the
crossover (256 by default), dense accumulation above.  Consecutive chunks that
all chose sorting are merged toward the sort sweet spot (32 by default) before
sorting.  Both constants come from measuring a vectorized sort kernel and are
kept configurable rather than re-measured.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, InputError

_EMPTY_COLS = np.empty(0, dtype=np.int64)
_EMPTY_VALS = np.empty(0, dtype=np.float64)


class Accum(enum.Enum):
    SORT = "sort"
    DENSE = "dense"


@dataclass(frozen=True)
class AccumThresholds:
    sort_dense_crossover: int = 256
    sort_sweet_spot: int = 32

    def __post_init__(self):
        if self.sort_sweet_spot > self.sort_dense_crossover:
            raise InputError("sort_sweet_spot must not exceed sort_dense_crossover")


class DenseAccumulator:
    """Worker-local dense accumulation scratch of a fixed capacity.

    Classical layout: a value buffer plus a one-byte-per-slot bitmap (the byte
    granularity is what the planner's s_val+1 accounting assumes) and an
    insertion-order column list.  The drain clears exactly the touched slots,
    so a full O(capacity) reset never happens after construction.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise InputError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.buffer = np.zeros(self.capacity, dtype=np.float64)
        self.bitmap = np.zeros(self.capacity, dtype=np.uint8)
        self.col_buff = np.empty(0, dtype=np.int64)
        self.count = 0


def _first_occurrence_order(cols: np.ndarray) -> np.ndarray:
    uniq, first = np.unique(cols, return_index=True)
    return uniq[np.argsort(first, kind="stable")].astype(np.int64, copy=False)


def dense_accumulate(cols, vals, acc: DenseAccumulator):
    """Merge duplicates of (cols, vals) through a dense accumulator.

    Returns (out_cols, out_vals): the distinct indices in first-occurrence
    order and their sums.  Sums add in input order, so results are
    bit-deterministic.  The accumulator is left fully reset.
    """
    cols = np.asarray(cols)
    vals = np.asarray(vals, dtype=np.float64)
    n = cols.size
    if n == 0:
        return _EMPTY_COLS, _EMPTY_VALS
    cols = cols.astype(np.int64, copy=False)
    if int(cols.max()) >= acc.capacity or int(cols.min()) < 0:
        raise ContractViolation(
            f"column index outside accumulator capacity {acc.capacity}"
        )
    out_cols = _first_occurrence_order(cols)
    acc.col_buff = out_cols
    acc.count = out_cols.size
    if n * 16 >= acc.capacity:
        # dense enough that one bincount pass beats pointer-chasing scatter-adds
        sums = np.bincount(cols, weights=vals)
        out_vals = sums[out_cols]
    else:
        np.add.at(acc.buffer, cols, vals)
        out_vals = acc.buffer[out_cols].copy()
        acc.buffer[out_cols] = 0.0  # incremental reset of touched slots only
    acc.count = 0
    return out_cols, out_vals


def dense_accumulate_symbolic(cols, acc: DenseAccumulator) -> int:
    """Count distinct indices; only the bitmap and a counter are conceptually touched."""
    cols = np.asarray(cols)
    if cols.size == 0:
        return 0
    cols = cols.astype(np.int64, copy=False)
    if int(cols.max()) >= acc.capacity or int(cols.min()) < 0:
        raise ContractViolation(
            f"column index outside accumulator capacity {acc.capacity}"
        )
    return int(np.unique(cols).size)


def sort_accumulate(cols, vals):
    """Sort by column and merge duplicates.

    Returns (out_cols, out_vals) with strictly increasing out_cols.  The sort
    is stable on original position, and equal keys add in ascending original
    position, so floating-point results are deterministic.
    """
    cols = np.asarray(cols)
    vals = np.asarray(vals, dtype=np.float64)
    if cols.size == 0:
        return _EMPTY_COLS, _EMPTY_VALS
    cols = cols.astype(np.int64, copy=False)
    order = np.argsort(cols, kind="stable")
    sc = cols[order]
    sv = vals[order]
    starts = np.flatnonzero(np.r_[True, sc[1:] != sc[:-1]])
    return sc[starts], np.add.reduceat(sv, starts)


def select_accumulator(n_elems: int, thresholds: AccumThresholds) -> Accum:
    """Sorting below the crossover element count, dense accumulation at or above."""
    return Accum.SORT if n_elems < thresholds.sort_dense_crossover else Accum.DENSE


def merge_chunks_for_sort(chunk_sizes, target: int) -> np.ndarray:
    """Group consecutive sort-bound chunks so each group's size lands near target.

    Greedy left-to-right: a chunk joins the current group while doing so moves
    the group total closer to target; otherwise (including ties, which keep the
    smaller group) the group closes.  Chunks are never split.  Returns group
    boundaries [0, ..., len(chunk_sizes)].
    """
    sizes = [int(s) for s in chunk_sizes]
    if not sizes:
        return np.zeros(1, dtype=np.int64)
    bounds = [0]
    total = sizes[0]
    for i, s in enumerate(sizes[1:], start=1):
        if abs(total + s - target) < abs(total - target):
            total += s
        else:
            bounds.append(i)
            total = s
    bounds.append(len(sizes))
    return np.asarray(bounds, dtype=np.int64)
