"""System-aware chunk planning.

The fine-level reorder keeps a histogram array, a prefix-sum array, two active
cache lines per chunk, and the dense accumulator in the L2 cache.  With
``span`` columns to cover, the cached storage as a function of the fine chunk
count n is

    storage(n) = span * s_dense_accum / n  +  n * s_chunk_fine

with s_chunk_fine = s_histo + s_prefix_sum + 2 * s_cache_line.  The convex
minimum is at n = sqrt(span * s_dense_accum / s_chunk_fine); rounding that to
the nearest power of two on the log2 scale (ties up) gives the discrete
minimizer among powers of two.

When the minimized storage would still exceed the L2 size, a coarse level is
planned on top: the column space is split into coarse chunks of

    m_max_l2 = l2_bytes^2 / (4 * s_dense_accum * s_chunk_fine)

columns (floored to a power of two), the largest span whose optimal fine-level
working set fits in L2, and the fine level runs inside each coarse chunk.

The crossover decision and m_max_l2 always use the symbolic-phase accumulator
cost of one byte per slot, so the symbolic and numeric plans agree on the
coarse/fine split and row categorization is stable across phases.  Only the
fine chunk count itself uses the phase's real accumulator cost.
"""

import os
import warnings
from dataclasses import dataclass, replace

from .errors import InputError
from .util import ceil_pow2, exact_log2, floor_pow2, round_pow2_of_sqrt

SYMBOLIC = "symbolic"
NUMERIC = "numeric"

# coarse chunk counts past this point degraded reorder throughput in isolation
# benchmarks; the planner only warns, it does not clamp
COARSE_CHUNKS_WARN = 1 << 13

_DEFAULT_CACHE_LINE = 64
_DEFAULT_L2 = 1 << 20


@dataclass(frozen=True)
class SystemParams:
    cache_line_bytes: int = _DEFAULT_CACHE_LINE
    l2_bytes: int = _DEFAULT_L2
    memory_budget_bytes: int = 1 << 31
    histo_type_bytes: int = 4
    prefix_sum_type_bytes: int = 4
    val_bytes: int = 8

    def __post_init__(self):
        for name in (
            "cache_line_bytes",
            "l2_bytes",
            "memory_budget_bytes",
            "histo_type_bytes",
            "prefix_sum_type_bytes",
            "val_bytes",
        ):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be positive")
        if self.cache_line_bytes & (self.cache_line_bytes - 1):
            raise InputError("cache_line_bytes must be a power of two")

    @property
    def s_chunk_fine(self) -> int:
        return self.histo_type_bytes + self.prefix_sum_type_bytes + 2 * self.cache_line_bytes

    def dense_accum_bytes(self, phase: str) -> int:
        """Per-slot accumulator cost: value plus one bitmap byte, or bitmap only."""
        return 1 if phase == SYMBOLIC else self.val_bytes + 1


@dataclass(frozen=True)
class ChunkPlan:
    phase: str
    plan_cols: int  # column count ceiled to a power of two
    s_dense_accum: int
    s_chunk_fine: int
    n_chunks_fine: int
    chunk_len_fine: int
    shift_fine: int
    m_max_l2: int
    use_coarse: bool
    n_chunks_coarse: int
    chunk_len_coarse: int
    shift_coarse: int


def fine_level_storage(n_chunks: int, span: int, s_dense_accum: int, s_chunk_fine: int) -> int:
    """Cached bytes of the fine-level working set for a given chunk count."""
    return span * s_dense_accum // n_chunks + n_chunks * s_chunk_fine


def max_l2_cols(l2_bytes: int, s_dense_accum: int, s_chunk_fine: int) -> int:
    """Largest power-of-two column span whose optimal fine working set fits in L2."""
    raw = l2_bytes * l2_bytes // (4 * s_dense_accum * s_chunk_fine)
    return floor_pow2(raw) if raw >= 1 else 1


def compute_chunk_plan(sys: SystemParams, m_c: int, phase: str, allow_coarse: bool = True) -> ChunkPlan:
    """Chunk geometry for a matrix with m_c output columns in the given phase."""
    if m_c < 1:
        raise InputError("m_c must be >= 1")
    if phase not in (SYMBOLIC, NUMERIC):
        raise InputError(f"unknown phase {phase!r}")
    plan_cols = ceil_pow2(m_c)
    sda = sys.dense_accum_bytes(phase)
    scf = sys.s_chunk_fine

    m_max = max_l2_cols(sys.l2_bytes, sys.dense_accum_bytes(SYMBOLIC), scf)
    use_coarse = allow_coarse and plan_cols > m_max
    span = m_max if use_coarse else plan_cols

    n_fine = round_pow2_of_sqrt(span * sda, scf)
    # a chunk narrower than one cache line of 4-byte indices wastes the line
    min_len = max(1, sys.cache_line_bytes // 4)
    n_fine = min(n_fine, max(1, span // min_len), span)
    n_fine = max(n_fine, 1)
    chunk_len = span // n_fine

    if use_coarse:
        n_coarse = plan_cols // m_max
        len_coarse = m_max
    else:
        n_coarse = 1
        len_coarse = plan_cols
    if n_coarse > COARSE_CHUNKS_WARN:
        warnings.warn(
            f"{n_coarse} coarse chunks exceeds the measured reorder breaking point "
            f"({COARSE_CHUNKS_WARN}); expect reduced throughput",
            stacklevel=2,
        )
    return ChunkPlan(
        phase=phase,
        plan_cols=plan_cols,
        s_dense_accum=sda,
        s_chunk_fine=scf,
        n_chunks_fine=n_fine,
        chunk_len_fine=chunk_len,
        shift_fine=exact_log2(chunk_len),
        m_max_l2=m_max,
        use_coarse=use_coarse,
        n_chunks_coarse=n_coarse,
        chunk_len_coarse=len_coarse,
        shift_coarse=exact_log2(len_coarse),
    )


def _read_int(path):
    try:
        with open(path) as f:
            return int(f.read().strip())
    except (OSError, ValueError):
        return None


def _read_cache_size(path):
    try:
        with open(path) as f:
            s = f.read().strip()
    except OSError:
        return None
    try:
        if s.endswith("K"):
            return int(s[:-1]) * 1024
        if s.endswith("M"):
            return int(s[:-1]) * 1024 * 1024
        return int(s)
    except ValueError:
        return None


def detect_system_params(memory_budget_fraction: float = 0.25, val_bytes: int = 8) -> SystemParams:
    """Probe the host for cache line size, per-core L2 size, and total memory.

    Falls back to 64-byte lines and a 1 MiB L2 with a warning when the sysfs
    interface is unavailable.  The memory budget defaults to a quarter of the
    detected physical memory.
    """
    base = "/sys/devices/system/cpu/cpu0/cache"
    line = None
    l2 = None
    try:
        for entry in sorted(os.listdir(base)):
            if not entry.startswith("index"):
                continue
            level = _read_int(f"{base}/{entry}/level")
            if level == 2:
                l2 = _read_cache_size(f"{base}/{entry}/size")
                line = _read_int(f"{base}/{entry}/coherency_line_size")
                break
    except OSError:
        pass
    if line is None or line & (line - 1):
        line = _DEFAULT_CACHE_LINE
    if l2 is None or l2 <= 0:
        warnings.warn(
            f"could not detect the L2 cache size; assuming {_DEFAULT_L2} bytes", stacklevel=2
        )
        l2 = _DEFAULT_L2

    mem = None
    try:
        mem = os.sysconf("SC_PHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        pass
    if not mem or mem <= 0:
        warnings.warn("could not detect physical memory; assuming 8 GiB", stacklevel=2)
        mem = 8 << 30
    budget = max(1, int(mem * memory_budget_fraction))
    return SystemParams(
        cache_line_bytes=int(line),
        l2_bytes=int(l2),
        memory_budget_bytes=budget,
        val_bytes=val_bytes,
    )


def with_overrides(sys: SystemParams, **kwargs) -> SystemParams:
    """Copy of sys with the given non-None fields replaced."""
    updates = {k: v for k, v in kwargs.items() if v is not None}
    return replace(sys, **updates) if updates else sys
