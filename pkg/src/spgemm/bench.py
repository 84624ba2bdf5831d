"""Microbenchmarks for the locality-generation building blocks.

The workload is a synthetic intermediate-product stream: an index array
uniform in [0, stream length) and a value array, mimicking the column indices
and values that SpGEMM reorders and accumulates.  Each stage is timed in
isolation over the same stream:

    histogram      chunk occupancy counts (index >> shift)
    prefix_sum     chunk offsets from the histogram
    reorder        stable scatter into chunk order with local index shift
    dense_accum    per-chunk dense accumulation (buffer length = chunk length)
    sort_accum     per-chunk sort-merge accumulation
    stream         contiguous copy of both arrays, the peak-rate baseline

``total`` is histogram + prefix_sum + reorder + dense_accum, the single-level
reorder-then-accumulate pipeline.  Every timed run also checks a correctness
checksum per stage, so benchmarking doubles as a test.  Stage times are
hardware-dependent and are reported, never asserted.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .accumulators import DenseAccumulator, dense_accumulate, sort_accumulate
from .errors import InputError
from .matrix import stable_scatter_positions
from .util import ceil_pow2, exact_log2, substream


@dataclass(frozen=True)
class StreamSpec:
    size: int
    length: int  # exclusive upper bound on index values
    seed: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise InputError("stream length must be >= 1")
        if self.size < 0:
            raise InputError("stream size must be non-negative")


@dataclass
class BenchRecord:
    name: str
    params: dict = field(default_factory=dict)
    seconds: float = 0.0
    rate: float = 0.0  # elements per second
    rep: int = 0


def make_stream(spec: StreamSpec):
    rng = substream(spec.seed, 0)
    idx = rng.integers(0, spec.length, size=spec.size, dtype=np.int64)
    vals = rng.random(spec.size)
    return idx, vals


def measure_bandwidth(n_bytes: int = 1 << 28, reps: int = 3):
    """Best-of-reps contiguous read+write rate over an index/value array pair.

    Returns (bytes_per_second, bytes_moved_per_rep).  One rep reads both
    arrays and writes both copies, so it moves 2 * (index bytes + value
    bytes) = n_bytes * 2 in total.
    """
    if reps < 1:
        raise InputError("reps must be >= 1")
    n = max(1, n_bytes // 16)  # int64 index + float64 value per element
    idx = np.arange(n, dtype=np.int64)
    vals = np.ones(n, dtype=np.float64)
    out_i = np.empty_like(idx)
    out_v = np.empty_like(vals)
    moved = 2 * (idx.nbytes + vals.nbytes)
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        out_i[:] = idx
        out_v[:] = vals
        dt = time.perf_counter() - t0
        best = min(best, dt)
    if out_i[-1] != idx[-1]:  # keep the copies observable
        raise RuntimeError("stream copy failed")
    return moved / best, moved


def microbench_building_blocks(spec: StreamSpec, n_chunks: int, reps: int = 1, rng_check: bool = True):
    """Time each building block over one generated stream; returns BenchRecords.

    ``n_chunks`` must be a power of two not exceeding the stream length.  The
    accumulator length per chunk is ceil_pow2(length) / n_chunks.  Raises if
    any stage's checksum fails.
    """
    if n_chunks < 1 or n_chunks & (n_chunks - 1):
        raise InputError("n_chunks must be a power of two")
    if n_chunks > spec.length:
        raise InputError("n_chunks must not exceed the stream length")
    if reps < 1:
        raise InputError("reps must be >= 1")
    span = ceil_pow2(spec.length)
    chunk_len = span // n_chunks
    shift = exact_log2(chunk_len)
    idx, vals = make_stream(spec)
    params = {"size": spec.size, "length": spec.length, "n_chunks": n_chunks, "seed": spec.seed}

    records = []

    def record(name, seconds, rep):
        records.append(
            BenchRecord(name, dict(params), seconds, spec.size / seconds if seconds > 0 else 0.0, rep)
        )

    for rep in range(reps):
        # histogram
        t0 = time.perf_counter()
        chunks = idx >> shift
        counts = np.bincount(chunks, minlength=n_chunks)
        t_hist = time.perf_counter() - t0
        if int(counts.sum()) != spec.size:
            raise RuntimeError("histogram checksum failed: counts do not sum to the stream size")

        # prefix sum
        t0 = time.perf_counter()
        offsets = np.zeros(n_chunks + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        t_prefix = time.perf_counter() - t0
        if int(offsets[-1]) != spec.size:
            raise RuntimeError("prefix-sum checksum failed")

        # reorder (stable scatter with chunk-local index shift)
        t0 = time.perf_counter()
        heads = offsets[:-1].copy()
        pos = stable_scatter_positions(chunks, heads)
        col_out = np.empty_like(idx)
        col_out[pos] = idx & (chunk_len - 1)
        val_out = np.empty_like(vals)
        val_out[pos] = vals
        t_reorder = time.perf_counter() - t0
        if rng_check:
            rebuilt = col_out + np.repeat(np.arange(n_chunks, dtype=np.int64) * chunk_len, np.diff(offsets))
            if not np.array_equal(np.sort(rebuilt), np.sort(idx)):
                raise RuntimeError("reorder checksum failed: output is not a permutation of the input")

        # dense accumulation per chunk
        acc = DenseAccumulator(chunk_len)
        distinct_dense = 0
        vsum_dense = 0.0
        t0 = time.perf_counter()
        for c in range(n_chunks):
            s, e = int(offsets[c]), int(offsets[c + 1])
            if s == e:
                continue
            oc, ov = dense_accumulate(col_out[s:e], val_out[s:e], acc)
            distinct_dense += oc.size
            vsum_dense += float(ov.sum())
        t_dense = time.perf_counter() - t0

        # sort accumulation per chunk
        distinct_sort = 0
        vsum_sort = 0.0
        t0 = time.perf_counter()
        for c in range(n_chunks):
            s, e = int(offsets[c]), int(offsets[c + 1])
            if s == e:
                continue
            oc, ov = sort_accumulate(col_out[s:e], val_out[s:e])
            distinct_sort += oc.size
            vsum_sort += float(ov.sum())
        t_sort = time.perf_counter() - t0

        expected_distinct = int(np.unique(idx).size)
        if distinct_dense != expected_distinct or distinct_sort != expected_distinct:
            raise RuntimeError("accumulation checksum failed: distinct-column counts disagree")
        total_v = float(vals.sum())
        if not (np.isclose(vsum_dense, total_v, rtol=1e-9) and np.isclose(vsum_sort, total_v, rtol=1e-9)):
            raise RuntimeError("accumulation checksum failed: value sums not conserved")

        # streaming baseline
        out_i = np.empty_like(idx)
        out_v = np.empty_like(vals)
        t0 = time.perf_counter()
        out_i[:] = idx
        out_v[:] = vals
        t_stream = time.perf_counter() - t0
        if spec.size and (out_i[-1] != idx[-1] or out_v[-1] != vals[-1]):
            raise RuntimeError("stream checksum failed")

        record("histogram", t_hist, rep)
        record("prefix_sum", t_prefix, rep)
        record("reorder", t_reorder, rep)
        record("dense_accum", t_dense, rep)
        record("sort_accum", t_sort, rep)
        record("stream", t_stream, rep)
        record("total", t_hist + t_prefix + t_reorder + t_dense, rep)
    return records
