"""Matrix Market coordinate I/O and a compact binary cache format.

Matrix Market support covers the coordinate format with real / integer /
pattern / complex fields and general / symmetric / skew-symmetric / hermitian
symmetries.  Integer and complex values are coerced to real (complex keeps the
real part); pattern entries get value 1.0; symmetric variants are expanded to
full storage.  The array (dense) format is rejected.

Binary cache layout (little endian), for fast reload of large matrices:

    offset  size  field
    0       4     magic  b"SPGC"
    4       4     version (uint32, currently 1)
    8       8     n_rows (uint64)
    16      8     n_cols (uint64)
    24      8     nnz (uint64)
    32      1     column-index width in bytes (4 or 8)
    33      1     value width in bytes (8)
    34      1     canonical flag (0 or 1)
    35      5     zero padding
    40      ...   row_ptr  (n_rows+1) x int64
    ...     ...   col      nnz x uint32 or uint64
    ...     ...   val      nnz x float64
"""

import struct

import numpy as np

from .errors import ParseError
from .matrix import CsrMatrix, csr_from_arrays
from .util import col_index_dtype

_MAGIC = b"SPGC"
_VERSION = 1

_FIELDS = {"real", "integer", "pattern", "complex"}
_SYMMETRIES = {"general", "symmetric", "skew-symmetric", "hermitian"}


def read_matrix_market(path) -> CsrMatrix:
    """Parse a Matrix Market coordinate file into a canonical CsrMatrix."""
    with open(path, "r", encoding="latin-1") as f:
        lines = f.readlines()
    if not lines:
        raise ParseError("empty file", line=1)

    head = lines[0].strip().split()
    if len(head) != 5 or head[0].lower() != "%%matrixmarket":
        raise ParseError("expected '%%MatrixMarket matrix coordinate <field> <symmetry>'", line=1)
    obj, fmt, field, symmetry = (t.lower() for t in head[1:])
    if obj != "matrix":
        raise ParseError(f"unsupported object '{obj}'", line=1)
    if fmt == "array":
        raise ParseError("array (dense) format is not supported", line=1)
    if fmt != "coordinate":
        raise ParseError(f"unsupported format '{fmt}'", line=1)
    if field not in _FIELDS:
        raise ParseError(f"unsupported field '{field}'", line=1)
    if symmetry not in _SYMMETRIES:
        raise ParseError(f"unsupported symmetry '{symmetry}'", line=1)

    # skip comments, find the dimension line
    ln = 1
    dims = None
    for ln, raw in enumerate(lines[1:], start=2):
        s = raw.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'rows cols nnz', got {s!r}", line=ln)
        try:
            dims = tuple(int(p) for p in parts)
        except ValueError:
            raise ParseError(f"non-integer dimension in {s!r}", line=ln) from None
        break
    if dims is None:
        raise ParseError("missing dimension line", line=len(lines))
    n_rows, n_cols, nnz = dims
    if n_rows < 0 or n_cols < 0 or nnz < 0:
        raise ParseError("negative dimension", line=ln)

    want = 2 if field == "pattern" else (4 if field == "complex" else 3)
    ri = np.empty(nnz, dtype=np.int64)
    ci = np.empty(nnz, dtype=np.int64)
    vv = np.empty(nnz, dtype=np.float64)
    k = 0
    for ln2, raw in enumerate(lines[ln:], start=ln + 1):
        s = raw.strip()
        if not s or s.startswith("%"):
            continue
        if k >= nnz:
            raise ParseError(f"more than the declared {nnz} entries", line=ln2)
        parts = s.split()
        if len(parts) != want:
            raise ParseError(f"expected {want} fields, got {len(parts)}", line=ln2)
        try:
            r = int(parts[0])
            c = int(parts[1])
            v = 1.0 if field == "pattern" else float(parts[2])
        except ValueError:
            raise ParseError(f"malformed entry {s!r}", line=ln2) from None
        if not (1 <= r <= n_rows and 1 <= c <= n_cols):
            raise ParseError(f"index ({r}, {c}) outside {n_rows} x {n_cols}", line=ln2)
        ri[k], ci[k], vv[k] = r - 1, c - 1, v
        k += 1
    if k != nnz:
        raise ParseError(f"declared {nnz} entries but found {k}", line=len(lines))

    if symmetry != "general":
        off = ri != ci
        mr, mc, mv = ci[off], ri[off], vv[off]
        if symmetry == "skew-symmetric":
            mv = -mv
        ri = np.concatenate([ri, mr])
        ci = np.concatenate([ci, mc])
        vv = np.concatenate([vv, mv])

    return csr_from_arrays(ri, ci, vv, n_rows, n_cols)


def write_matrix_market(m: CsrMatrix, path, comment: str = None) -> None:
    """Write a CSR matrix as 'coordinate real general' with 1-based indices."""
    rows = np.repeat(np.arange(m.n_rows, dtype=np.int64), np.diff(m.row_ptr))
    with open(path, "w", encoding="ascii") as f:
        f.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in comment.splitlines():
                f.write(f"% {line}\n")
        f.write(f"{m.n_rows} {m.n_cols} {m.nnz}\n")
        for r, c, v in zip(rows + 1, m.col.astype(np.int64) + 1, m.val):
            f.write(f"{r} {c} {v:.17g}\n")


def write_binary_cache(m: CsrMatrix, path) -> None:
    """Write the compact binary cache format documented in this module."""
    col_width = m.col.dtype.itemsize
    header = struct.pack(
        "<4sIQQQBBB5x", _MAGIC, _VERSION, m.n_rows, m.n_cols, m.nnz, col_width, 8,
        1 if m.canonical else 0,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(m.row_ptr, dtype="<i8").tobytes())
        f.write(np.ascontiguousarray(m.col, dtype=f"<u{col_width}").tobytes())
        f.write(np.ascontiguousarray(m.val, dtype="<f8").tobytes())


def read_binary_cache(path) -> CsrMatrix:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 40 or blob[:4] != _MAGIC:
        raise ParseError("not a binary cache file (bad magic)")
    version, n_rows, n_cols, nnz, col_width, val_width, canonical = struct.unpack(
        "<IQQQBBB5x", blob[4:40]
    )
    if version != _VERSION:
        raise ParseError(f"unsupported cache version {version}")
    if col_width not in (4, 8) or val_width != 8:
        raise ParseError(f"unsupported widths col={col_width} val={val_width}")
    need = 40 + (n_rows + 1) * 8 + nnz * col_width + nnz * 8
    if len(blob) != need:
        raise ParseError(f"truncated cache file: {len(blob)} bytes, expected {need}")
    off = 40
    row_ptr = np.frombuffer(blob, dtype="<i8", count=n_rows + 1, offset=off).astype(np.int64)
    off += (n_rows + 1) * 8
    col = np.frombuffer(blob, dtype=f"<u{col_width}", count=nnz, offset=off)
    col = col.astype(col_index_dtype(n_cols))
    off += nnz * col_width
    val = np.frombuffer(blob, dtype="<f8", count=nnz, offset=off).astype(np.float64)
    m = CsrMatrix(int(n_rows), int(n_cols), row_ptr, col, val, canonical=bool(canonical))
    return m


def read_matrix(path) -> CsrMatrix:
    """Dispatch on extension: .bin / .spgc is the binary cache, anything else Matrix Market."""
    p = str(path)
    if p.endswith(".bin") or p.endswith(".spgc"):
        return read_binary_cache(p)
    return read_matrix_market(p)


def write_matrix(m: CsrMatrix, path) -> None:
    p = str(path)
    if p.endswith(".bin") or p.endswith(".spgc"):
        write_binary_cache(m, p)
    else:
        write_matrix_market(m, p)
