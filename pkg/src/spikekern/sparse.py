"""CSR connectivity and the dense / sparse / event-driven matvec kernels.

Shape convention: a matrix has ``n_rows x n_cols``. ``transpose=False``
computes ``M @ v`` (gather over each row, ``v`` has ``n_cols`` entries);
``transpose=True`` computes ``M.T @ v`` (scatter each row into the output,
``v`` has ``n_rows`` entries). Synaptic matrices are stored pre-major
(rows = presynaptic neurons), so spike propagation is the scatter form.
"""

from __future__ import annotations

import struct

import warnings

import numba as nb
import numpy as np

from .errors import CsrFormatError, DimensionError

__all__ = [
    "CsrMatrix",
    "dense_matvec",
    "csrmv",
    "event_csrmv",
    "event_csrmv_weight_grad",
    "save_csr",
    "load_csr",
    "load_edge_list",
    "set_threads",
]

_PARALLEL = {"enabled": False}


def set_threads(n: int) -> None:
    """Use ``n`` numba threads; ``n > 1`` switches gather kernels to row-parallel."""
    n = int(n)
    if n < 1:
        raise ValueError("thread count must be positive")
    if n == 1 and not _PARALLEL["enabled"]:
        return
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", nb.NumbaWarning)
        nb.set_num_threads(min(n, nb.config.NUMBA_NUM_THREADS))
    _PARALLEL["enabled"] = n > 1


def parallel_enabled() -> bool:
    return _PARALLEL["enabled"]


class CsrMatrix:
    """Canonical compressed-sparse-row matrix.

    ``weights`` is either a Python float (homogeneous: every stored edge has
    that value, stored once) or a float array with one entry per edge.
    """

    __slots__ = ("n_rows", "n_cols", "indptr", "indices", "weights")

    def __init__(self, n_rows, n_cols, indptr, indices, weights, check=True):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int32)
        if np.ndim(weights) == 0:
            self.weights = float(weights)
        else:
            w = np.asarray(weights)
            if w.dtype not in (np.float32, np.float64):
                w = w.astype(np.float64)
            self.weights = np.ascontiguousarray(w)
        if check:
            self.validate()

    # -- construction -----------------------------------------------------

    @classmethod
    def from_coo(cls, rows, cols, weights, shape):
        """Build canonical CSR, sorting columns and summing duplicate edges."""
        n_rows, n_cols = map(int, shape)
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        if rows.shape != cols.shape:
            raise DimensionError("rows and cols differ in length")
        if rows.size and (rows.min() < 0 or rows.max() >= n_rows):
            raise CsrFormatError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= n_cols):
            raise CsrFormatError("column index out of range")
        homogeneous = np.ndim(weights) == 0
        if homogeneous:
            w = np.full(rows.size, float(weights))
        else:
            w = np.asarray(weights, dtype=np.float64).ravel()
            if w.size != rows.size:
                raise DimensionError("weights and edges differ in length")
        key = rows * n_cols + cols
        order = np.argsort(key, kind="stable")
        key, w = key[order], w[order]
        uniq, start = np.unique(key, return_index=True)
        merged = np.add.reduceat(w, start) if uniq.size else w[:0]
        r = uniq // n_cols if n_cols else uniq
        c = uniq - r * n_cols
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=n_rows), out=indptr[1:])
        if homogeneous and uniq.size == rows.size:
            return cls(n_rows, n_cols, indptr, c, float(weights))
        return cls(n_rows, n_cols, indptr, c, merged)

    @classmethod
    def from_dense(cls, m, homogeneous=False):
        m = np.asarray(m, dtype=np.float64)
        if m.ndim != 2:
            raise DimensionError("expected a 2-D matrix")
        r, c = np.nonzero(m)
        if homogeneous:
            vals = m[r, c]
            if vals.size and not np.all(vals == vals[0]):
                raise CsrFormatError("matrix is not homogeneous")
            w = float(vals[0]) if vals.size else 0.0
            return cls.from_coo(r, c, w, m.shape)
        return cls.from_coo(r, c, m[r, c], m.shape)

    # -- invariants ---------------------------------------------------------

    def validate(self):
        ip, ix = self.indptr, self.indices
        if ip.shape != (self.n_rows + 1,):
            raise CsrFormatError("indptr must have n_rows + 1 entries")
        if ip[0] != 0 or ip[-1] != ix.size:
            raise CsrFormatError("indptr must start at 0 and end at nnz")
        if np.any(np.diff(ip) < 0):
            raise CsrFormatError("indptr must be non-decreasing")
        if ix.size:
            if ix.min() < 0 or ix.max() >= self.n_cols:
                raise CsrFormatError("column index out of range")
            step = np.diff(ix.astype(np.int64))
            row_start = np.zeros(ix.size, dtype=bool)
            row_start[ip[:-1][ip[:-1] < ix.size]] = True
            if np.any(step[~row_start[1:]] <= 0):
                raise CsrFormatError("column indices must be strictly increasing within a row")
        if not self.homogeneous and self.weights.size != ix.size:
            raise CsrFormatError("per-edge weights must have nnz entries")

    # -- accessors ----------------------------------------------------------

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.indices.size)

    @property
    def homogeneous(self):
        return isinstance(self.weights, float)

    def edge_weights(self):
        """Per-edge weight array (expands a homogeneous weight)."""
        if self.homogeneous:
            return np.full(self.nnz, self.weights)
        return self.weights

    def edge_rows(self):
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.indptr))

    def densify(self):
        out = np.zeros(self.shape, dtype=np.float64)
        out[self.edge_rows(), self.indices] = self.edge_weights()
        return out

    def transpose(self):
        """CSR of the transposed matrix."""
        w = self.weights if self.homogeneous else self.edge_weights()
        return CsrMatrix.from_coo(self.indices, self.edge_rows(), w, (self.n_cols, self.n_rows))

    def state_bytes(self):
        """Bytes of persistent storage: offsets, column indices, weights."""
        w = 8 if self.homogeneous else self.weights.nbytes
        return self.indptr.nbytes + self.indices.nbytes + w

    def _kernel_args(self):
        if self.homogeneous:
            return self.indptr, self.indices, _EMPTY, self.weights, True
        return self.indptr, self.indices, self.weights, 0.0, False

    def __eq__(self, other):
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        if self.shape != other.shape or self.homogeneous != other.homogeneous:
            return False
        same_w = (self.weights == other.weights if self.homogeneous
                  else np.array_equal(self.weights, other.weights))
        return bool(same_w and np.array_equal(self.indptr, other.indptr)
                    and np.array_equal(self.indices, other.indices))

    def __repr__(self):
        kind = f"w={self.weights}" if self.homogeneous else "per-edge"
        return f"CsrMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz}, {kind})"


_EMPTY = np.empty(0, dtype=np.float64)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@nb.njit(cache=True)
def _gather(indptr, indices, data, w, homo, v, out):
    for i in range(indptr.size - 1):
        acc = 0.0
        if homo:
            for j in range(indptr[i], indptr[i + 1]):
                acc += w * v[indices[j]]
        else:
            for j in range(indptr[i], indptr[i + 1]):
                acc += data[j] * v[indices[j]]
        out[i] = acc


@nb.njit(cache=True, parallel=True)
def _gather_par(indptr, indices, data, w, homo, v, out):
    for i in nb.prange(indptr.size - 1):
        acc = 0.0
        if homo:
            for j in range(indptr[i], indptr[i + 1]):
                acc += w * v[indices[j]]
        else:
            for j in range(indptr[i], indptr[i + 1]):
                acc += data[j] * v[indices[j]]
        out[i] = acc


@nb.njit(cache=True)
def _scatter(indptr, indices, data, w, homo, v, out):
    # non-event baseline: every row is visited, zeros included
    for i in range(indptr.size - 1):
        vi = v[i]
        if homo:
            for j in range(indptr[i], indptr[i + 1]):
                out[indices[j]] += w * vi
        else:
            for j in range(indptr[i], indptr[i + 1]):
                out[indices[j]] += data[j] * vi


@nb.njit(cache=True)
def _event_scatter(indptr, indices, data, w, homo, events, out):
    reads = 0
    for i in range(events.size):
        if events[i]:
            start, stop = indptr[i], indptr[i + 1]
            if homo:
                for j in range(start, stop):
                    out[indices[j]] += w
            else:
                for j in range(start, stop):
                    out[indices[j]] += data[j]
            reads += stop - start
    return reads


@nb.njit(cache=True)
def _event_gather(indptr, indices, data, w, homo, events, out):
    reads = 0
    for i in range(indptr.size - 1):
        acc = 0.0
        for j in range(indptr[i], indptr[i + 1]):
            if events[indices[j]]:
                if homo:
                    acc += w
                else:
                    acc += data[j]
                reads += 1
        out[i] = acc
    return reads


@nb.njit(cache=True, parallel=True)
def _event_gather_par(indptr, indices, data, w, homo, events, out):
    n = indptr.size - 1
    counts = np.zeros(n, dtype=np.int64)
    for i in nb.prange(n):
        acc = 0.0
        c = 0
        for j in range(indptr[i], indptr[i + 1]):
            if events[indices[j]]:
                if homo:
                    acc += w
                else:
                    acc += data[j]
                c += 1
        out[i] = acc
        counts[i] = c
    return counts.sum()


# ---------------------------------------------------------------------------
# public operators
# ---------------------------------------------------------------------------

def dense_matvec(m, v):
    """``y = m @ v`` for a dense matrix."""
    m = np.asarray(m)
    v = np.asarray(v)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise DimensionError(f"cannot multiply {m.shape} by {v.shape}")
    return m @ v


def _out_dtype(m):
    if not m.homogeneous and m.weights.dtype == np.float32:
        return np.float32
    return np.float64


def _check_input(m: CsrMatrix, n, transpose):
    expected = m.n_rows if transpose else m.n_cols
    if n != expected:
        raise DimensionError(f"input has {n} entries, operator expects {expected}")


def csrmv(m: CsrMatrix, v, transpose=False):
    """Sparse matvec that multiplies every stored entry, spikes or not."""
    if not isinstance(m, CsrMatrix):
        raise TypeError("csrmv expects a CsrMatrix")
    v = np.ascontiguousarray(v, dtype=_out_dtype(m))
    if v.ndim != 1:
        raise DimensionError("input must be a vector")
    _check_input(m, v.size, transpose)
    args = m._kernel_args()
    if transpose:
        out = np.zeros(m.n_cols, dtype=v.dtype)
        _scatter(*args, v, out)
    else:
        out = np.empty(m.n_rows, dtype=v.dtype)
        (_gather_par if parallel_enabled() else _gather)(*args, v, out)
    return out


def _as_events(events):
    e = np.asarray(events)
    if e.ndim != 1:
        raise DimensionError("events must be a 1-D boolean vector")
    if e.dtype != np.bool_:
        e = e != 0
    return np.ascontiguousarray(e)


def event_csrmv(m: CsrMatrix, events, transpose=False, stats=None):
    """Event-driven matvec: only entries coupled to a ``True`` event are touched.

    With ``transpose=True`` each active row is scattered into the output
    (the spike-propagation form). With ``transpose=False`` each output row
    sums the weights whose column carries an event. If ``stats`` is a dict,
    the number of weight reads is stored under ``"weight_reads"``.
    """
    e = _as_events(events)
    _check_input(m, e.size, transpose)
    args = m._kernel_args()
    dtype = _out_dtype(m)
    if transpose:
        out = np.zeros(m.n_cols, dtype=dtype)
        reads = _event_scatter(*args, e, out)
    else:
        out = np.empty(m.n_rows, dtype=dtype)
        reads = (_event_gather_par if parallel_enabled() else _event_gather)(*args, e, out)
    if stats is not None:
        stats["weight_reads"] = int(reads)
    return out


def event_csrmv_weight_grad(m: CsrMatrix, events, cotangent, transpose=False):
    """Reverse-mode gradient of ``cotangent . event_csrmv(m, events)`` w.r.t. weights.

    Returns a float for homogeneous matrices and a per-edge array otherwise.
    """
    e = _as_events(events)
    _check_input(m, e.size, transpose)
    cot = np.asarray(cotangent, dtype=np.float64)
    n_out = m.n_cols if transpose else m.n_rows
    if cot.shape != (n_out,):
        raise DimensionError(f"cotangent must have {n_out} entries")
    rows = m.edge_rows()
    src, tgt = (rows, m.indices) if transpose else (m.indices, rows)
    grad = np.where(e[src], cot[tgt], 0.0)
    if m.homogeneous:
        return float(grad.sum())
    return grad


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

MAGIC = b"SPKCSR1\x00"
_HOMO, _PER_EDGE = 0, 1


def save_csr(path, m: CsrMatrix):
    """Write the flat little-endian binary container."""
    if max(m.n_rows, m.n_cols, m.nnz) >= 2**32:
        raise CsrFormatError("matrix too large for 32-bit container fields")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", m.n_rows, m.n_cols))
        fh.write(m.indptr.astype("<u4").tobytes())
        fh.write(m.indices.astype("<u4").tobytes())
        if m.homogeneous:
            fh.write(struct.pack("<B", _HOMO))
            fh.write(struct.pack("<d", m.weights))
        else:
            fh.write(struct.pack("<B", _PER_EDGE))
            fh.write(m.weights.astype("<f8").tobytes())


def load_csr(path) -> CsrMatrix:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        return _parse_csr(raw)
    except (struct.error, ValueError) as exc:
        if isinstance(exc, CsrFormatError):
            raise
        raise CsrFormatError(f"truncated or corrupt CSR container: {exc}") from exc


def _parse_csr(raw) -> CsrMatrix:
    if raw[:8] != MAGIC:
        raise CsrFormatError("bad magic; not a SPKCSR1 file")
    n_rows, n_cols = struct.unpack_from("<II", raw, 8)
    off = 16
    indptr = np.frombuffer(raw, dtype="<u4", count=n_rows + 1, offset=off)
    off += 4 * (n_rows + 1)
    nnz = int(indptr[-1])
    indices = np.frombuffer(raw, dtype="<u4", count=nnz, offset=off)
    off += 4 * nnz
    (kind,) = struct.unpack_from("<B", raw, off)
    off += 1
    if kind == _HOMO:
        (w,) = struct.unpack_from("<d", raw, off)
        off += 8
    elif kind == _PER_EDGE:
        w = np.frombuffer(raw, dtype="<f8", count=nnz, offset=off).astype(np.float64)
        off += 8 * nnz
    else:
        raise CsrFormatError(f"unknown weight-kind tag {kind}")
    if off != len(raw):
        raise CsrFormatError("trailing bytes after weight block")
    return CsrMatrix(n_rows, n_cols, indptr.astype(np.int64), indices.astype(np.int32), w)


def load_edge_list(path, shape=None, default_weight=1.0) -> CsrMatrix:
    """Read ``src dst [weight]`` lines (``#`` starts a comment).

    Without any weight column the result is homogeneous. Mixing weighted
    and unweighted lines is an error.
    """
    src, dst, wts = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise CsrFormatError(f"line {lineno}: expected 'src dst [weight]'")
            src.append(int(parts[0]))
            dst.append(int(parts[1]))
            wts.append(float(parts[2]) if len(parts) == 3 else None)
    weighted = [w is not None for w in wts]
    if any(weighted) and not all(weighted):
        raise CsrFormatError("edge list mixes weighted and unweighted lines")
    if shape is None:
        shape = (max(src, default=-1) + 1, max(dst, default=-1) + 1)
    w = np.array(wts, dtype=np.float64) if all(weighted) and wts else float(default_weight)
    return CsrMatrix.from_coo(src, dst, w, shape)
