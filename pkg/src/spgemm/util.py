"""Small shared helpers: power-of-two arithmetic, index dtypes, seeded substreams."""

import numpy as np


def ceil_pow2(x: int) -> int:
    """Smallest power of two >= x (x >= 1)."""
    if x < 1:
        raise ValueError("ceil_pow2 requires x >= 1")
    return 1 << (int(x) - 1).bit_length()


def floor_pow2(x: int) -> int:
    """Largest power of two <= x (x >= 1)."""
    if x < 1:
        raise ValueError("floor_pow2 requires x >= 1")
    return 1 << (int(x).bit_length() - 1)


def exact_log2(x: int) -> int:
    """log2 of a power of two."""
    x = int(x)
    if x < 1 or x & (x - 1):
        raise ValueError(f"{x} is not a power of two")
    return x.bit_length() - 1


def round_pow2_of_sqrt(num: int, den: int) -> int:
    """Round sqrt(num/den) to the nearest power of two on the log2 scale.

    Ties (sqrt(num/den) exactly halfway between two powers on the log scale)
    round up.  Pure integer arithmetic: 2^k <= sqrt(num/den) iff num >= den*4^k,
    and the midpoint test sqrt(num/den) >= 2^(k+1/2) iff num >= den*2^(2k+1).
    """
    if num <= 0 or den <= 0:
        raise ValueError("num and den must be positive")
    if num < den:  # sqrt(num/den) < 1: clamp to the smallest usable count
        return 1
    k = 0  # largest k with num >= den * 4^k, i.e. floor(log2(sqrt(num/den)))
    while num >= den << (2 * (k + 1)):
        k += 1
    if num >= den << (2 * k + 1):  # at or past the log-scale midpoint: round up
        k += 1
    return 1 << k


def col_index_dtype(n_cols: int):
    """Column-index storage width: 4 bytes up to 2^32 columns, 8 bytes beyond."""
    return np.uint32 if n_cols <= 2**32 else np.uint64


def col_index_bytes(n_cols: int) -> int:
    return 4 if n_cols <= 2**32 else 8


def substream(seed: int, key: int) -> np.random.Generator:
    """Independent PCG64 stream keyed by (seed, key).

    Per-row substreams make lazy generation order-independent: the content of
    row r depends only on (seed, r), never on which rows were generated before.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(seed), int(key)))))
