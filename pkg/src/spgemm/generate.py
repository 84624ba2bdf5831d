"""Deterministic synthetic matrix generators: R-mat, uniform random, banded.

All generators are seeded and reproducible.  The PRNG is NumPy's PCG64; the
uniform-random generator derives one substream per row keyed by
(seed, row_id), so rows can be materialized lazily and in any order without
changing their content.  Values default to 1.0 so that accumulated sums are
integers and algorithms can be compared bit-exactly; pass
``random_values=True`` for uniform values in (0, 1].
"""

import numpy as np

from .errors import InputError
from .matrix import CsrMatrix
from .util import col_index_dtype, substream


def _check_probs(a, b, c):
    if a < 0 or b < 0 or c < 0:
        raise InputError("recursion probabilities must be non-negative")
    if a + b + c > 1.0 + 1e-12:
        raise InputError("a + b + c must not exceed 1")


class RmatParams:
    """Recursive power-law generator parameters (Graph500 defaults a=.57, b=c=.19)."""

    def __init__(self, scale, edge_factor, a=0.57, b=0.19, c=0.19, seed=0):
        if scale < 1:
            raise InputError("scale must be >= 1")
        if edge_factor < 1:
            raise InputError("edge_factor must be >= 1")
        _check_probs(a, b, c)
        self.scale = int(scale)
        self.edge_factor = int(edge_factor)
        self.a, self.b, self.c = float(a), float(b), float(c)
        self.seed = int(seed)


class ErParams:
    """Uniform-random (Erdos-Renyi style) generator parameters."""

    def __init__(self, n_rows, n_cols, avg_nnz_per_row, seed=0):
        if n_rows < 0 or n_cols < 0:
            raise InputError("dimensions must be non-negative")
        if avg_nnz_per_row > n_cols:
            raise InputError("avg_nnz_per_row must not exceed n_cols")
        if avg_nnz_per_row < 0:
            raise InputError("avg_nnz_per_row must be non-negative")
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.avg_nnz_per_row = int(avg_nnz_per_row)
        self.seed = int(seed)


def _rmat_edge_batch(rng, m, scale, a, b, c):
    """Draw m (row, col) pairs by descending the 2^scale x 2^scale quadrant tree."""
    rows = np.zeros(m, dtype=np.int64)
    cols = np.zeros(m, dtype=np.int64)
    ab = a + b
    abc = a + b + c
    for _ in range(scale):
        u = rng.random(m)
        row_bit = u >= ab
        col_bit = ((u >= a) & (u < ab)) | (u >= abc)
        rows = (rows << 1) | row_bit
        cols = (cols << 1) | col_bit
    return rows, cols


def gen_rmat(params: RmatParams, random_values: bool = False) -> CsrMatrix:
    """Square R-mat with exactly edge_factor * 2^scale distinct nonzeros.

    Collisions are resampled (not merged) until the target count of distinct
    (row, col) cells is reached, so the nonzero count is exact for every seed.
    """
    n = 1 << params.scale
    target = params.edge_factor * n
    if target > n * n:
        raise InputError(f"requested {target} nonzeros but the matrix has only {n * n} cells")
    probs = (params.a, params.b, params.c, 1.0 - params.a - params.b - params.c)
    reachable = sum(1 for p in probs if p > 1e-15) ** params.scale
    if target > reachable:
        raise InputError("zero-probability quadrants make the nonzero target unreachable")

    rng = substream(params.seed, 0)
    codes = np.empty(0, dtype=np.int64)
    while codes.size < target:
        need = target - codes.size
        r, c = _rmat_edge_batch(rng, need, params.scale, params.a, params.b, params.c)
        codes = np.unique(np.concatenate([codes, (r << params.scale) | c]))

    rows = (codes >> params.scale).astype(np.int64)
    cols = codes & (n - 1)
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    row_ptr[1:] = np.cumsum(np.bincount(rows, minlength=n))
    if random_values:
        vals = 1.0 - rng.random(target)  # uniform in (0, 1]
    else:
        vals = np.ones(target, dtype=np.float64)
    return CsrMatrix(n, n, row_ptr, cols.astype(col_index_dtype(n)), vals)


def _distinct_uniform(rng, k, n_cols):
    """k distinct uniform draws from [0, n_cols), by rejection, sorted ascending."""
    if k == n_cols:
        return np.arange(n_cols, dtype=np.int64)
    draws = np.empty(0, dtype=np.int64)
    while True:
        need = k - np.unique(draws).size
        if need <= 0:
            break
        batch = rng.integers(0, n_cols, size=need + need // 4 + 8)
        draws = np.concatenate([draws, batch])
    # keep the first k distinct values in draw order (uniform without replacement)
    uniq, first = np.unique(draws, return_index=True)
    keep = uniq[np.argsort(first, kind="stable")][:k]
    keep.sort()
    return keep


def gen_uniform_random(params: ErParams, rows=None, random_values: bool = False) -> CsrMatrix:
    """Each row gets exactly avg_nnz_per_row distinct uniform column indices.

    ``rows`` restricts generation to the given (sorted, unique) row ids; the
    other rows stay empty.  Because every row has its own (seed, row) PRNG
    substream, a lazily generated row is identical to the same row of the full
    matrix - handy when only the rows of B referenced by A are needed.
    """
    k = params.avg_nnz_per_row
    if rows is None:
        rows = np.arange(params.n_rows, dtype=np.int64)
    else:
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= params.n_rows):
            raise InputError("row id out of range")
        if np.any(np.diff(rows) <= 0):
            raise InputError("rows must be sorted and unique")
    counts = np.zeros(params.n_rows, dtype=np.int64)
    counts[rows] = k
    row_ptr = np.zeros(params.n_rows + 1, dtype=np.int64)
    row_ptr[1:] = np.cumsum(counts)
    cols = np.empty(k * rows.size, dtype=col_index_dtype(params.n_cols))
    vals = np.ones(k * rows.size, dtype=np.float64)
    out = 0
    for r in rows:
        rng = substream(params.seed, int(r))
        cols[out : out + k] = _distinct_uniform(rng, k, params.n_cols)
        if random_values:
            vals[out : out + k] = 1.0 - rng.random(k)
        out += k
    return CsrMatrix(params.n_rows, params.n_cols, row_ptr, cols, vals)


def gen_banded(n: int, half_band: int) -> CsrMatrix:
    """Square banded matrix: row i holds every column in [i-half_band, i+half_band]."""
    if n < 0 or half_band < 0:
        raise InputError("n and half_band must be non-negative")
    idx = np.arange(n, dtype=np.int64)
    starts = np.maximum(0, idx - half_band)
    ends = np.minimum(n - 1, idx + half_band)
    lens = ends - starts + 1
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    row_ptr[1:] = np.cumsum(lens)
    total = int(row_ptr[-1])
    cols = np.arange(total) - np.repeat(row_ptr[:-1], lens) + np.repeat(starts, lens)
    return CsrMatrix(n, n, row_ptr, cols.astype(col_index_dtype(n)), np.ones(total))
