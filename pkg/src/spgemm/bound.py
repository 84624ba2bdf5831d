"""Minimum-data-volume performance model for row-by-row SpGEMM.

The model charges every byte that a Gustavson-style symbolic+numeric pipeline
must move, assuming no reuse of previously read B rows:

    read bytes  = 2*(n_A+1)*s_rowPtr
                + nnz_A*(4*s_rowPtr + 2*s_colIdx + s_val)
                + n_interProd*(2*s_colIdx + s_val)
    write bytes = (n_C+1)*s_rowPtr + nnz_C*(s_colIdx + s_val)

The factors of two cover the symbolic and numeric passes; the factor of four
additionally covers reading both the start and end row pointer of each
(nonconsecutively accessed) B row.  Dividing the total volume by the measured
stream bandwidth gives the ideal wall-clock time; real runs are reported as a
multiple of it.
"""

from dataclasses import dataclass

from .errors import InputError
from .util import col_index_bytes


@dataclass(frozen=True)
class IdealBoundInputs:
    n_a: int
    nnz_a: int
    n_inter_prod: int
    n_c: int
    nnz_c: int
    s_row_ptr: int = 8
    s_col_idx: int = 4
    s_val: int = 4
    bandwidth_bytes_per_sec: float = 1.0

    def __post_init__(self):
        for name in ("n_a", "nnz_a", "n_inter_prod", "n_c", "nnz_c"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be non-negative")
        if self.bandwidth_bytes_per_sec <= 0:
            raise InputError("bandwidth must be positive")


def ideal_bound(inp: IdealBoundInputs):
    """Returns (read_bytes, write_bytes, ideal_seconds)."""
    read_vol = (
        2 * (inp.n_a + 1) * inp.s_row_ptr
        + inp.nnz_a * (4 * inp.s_row_ptr + 2 * inp.s_col_idx + inp.s_val)
        + inp.n_inter_prod * (2 * inp.s_col_idx + inp.s_val)
    )
    write_vol = (inp.n_c + 1) * inp.s_row_ptr + inp.nnz_c * (inp.s_col_idx + inp.s_val)
    t_ideal = (read_vol + write_vol) / inp.bandwidth_bytes_per_sec
    return read_vol, write_vol, t_ideal


def bound_inputs_for(A, B, nnz_c: int, n_inter_prod: int, bandwidth_bytes_per_sec: float, s_val: int = 8) -> IdealBoundInputs:
    """Bound inputs for a concrete multiplication, with width rules applied.

    The column-index width follows the output width selection: 4 bytes up to
    2^32 columns, 8 beyond.
    """
    return IdealBoundInputs(
        n_a=A.n_rows,
        nnz_a=A.nnz,
        n_inter_prod=n_inter_prod,
        n_c=A.n_rows,
        nnz_c=nnz_c,
        s_row_ptr=8,
        s_col_idx=col_index_bytes(B.n_cols),
        s_val=s_val,
        bandwidth_bytes_per_sec=bandwidth_bytes_per_sec,
    )
