"""Matvec against procedurally regenerated fixed-probability matrices.

A :class:`JitConnSpec` is the whole operator state: shape, probability,
weight distribution and seed. Row ``r`` of the implied matrix is produced by
walking the columns with gaps drawn from ``U[1, K]``, ``K = max(1,
floor(2/p - 1))``; the first target is ``gap - 1`` so ``K = 1`` covers every
column. Each target consumes a fixed block of counter positions in the
row's stream (gap first, then its weight draws), so any target's weight can
be recomputed without drawing the ones before it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator, Union

import numba as nb
import numpy as np

from .errors import DimensionError, SizeGuardError
from .rng import (MASK64, RowSampler, nb_bounded, nb_draw, nb_normal, nb_stream_key,
                  nb_unit, py_bounded, py_normal, py_unit)
from .sparse import CsrMatrix, _as_events, parallel_enabled

__all__ = [
    "Homo",
    "Uniform",
    "Normal",
    "JitConnSpec",
    "gap_bound",
    "effective_prob",
    "row_targets",
    "materialize",
    "jitconn_matvec",
    "jitconn_event_matvec",
    "jitconn_geometric_gap",
    "uniform_gap_sum",
    "geometric_gap_sum",
]

MATERIALIZE_GUARD = 10**8

# distribution codes used inside kernels
_HOMO, _UNIFORM, _NORMAL = 0, 1, 2
# counter positions consumed per target: one gap + weight draws
_STRIDE = {_HOMO: 1, _UNIFORM: 2, _NORMAL: 3}


@dataclass(frozen=True)
class Homo:
    w: float


@dataclass(frozen=True)
class Uniform:
    w_low: float
    w_high: float

    def __post_init__(self):
        if self.w_low > self.w_high:
            raise ValueError("w_low must not exceed w_high")


@dataclass(frozen=True)
class Normal:
    w_mu: float
    w_sigma: float

    def __post_init__(self):
        if self.w_sigma < 0:
            raise ValueError("w_sigma must be non-negative")


WeightDist = Union[Homo, Uniform, Normal]


def gap_bound(prob: float) -> int:
    """Largest gap ``K = max(1, floor(2/p - 1))``."""
    # the epsilon absorbs representation error, e.g. 2/p landing just below an integer
    return max(1, int(math.floor(2.0 / prob - 1.0 + 1e-9)))


def effective_prob(prob: float) -> float:
    """Connection density actually realized by ``U[1, K]`` gaps: ``2 / (K + 1)``."""
    return 2.0 / (gap_bound(prob) + 1)


@dataclass(frozen=True)
class JitConnSpec:
    n_rows: int
    n_cols: int
    prob: float
    weight_dist: WeightDist
    seed: int

    def __post_init__(self):
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("shape must be non-negative")
        if not 0.0 < self.prob <= 1.0:
            raise ValueError(f"prob must lie in (0, 1], got {self.prob}")
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not isinstance(self.weight_dist, (Homo, Uniform, Normal)):
            raise TypeError("weight_dist must be Homo, Uniform or Normal")
        if gap_bound(self.prob) == 1 and self.prob < 1.0:
            warnings.warn(f"prob={self.prob} gives gap bound 1: the matrix is fully "
                          "connected (effective prob 1)", stacklevel=3)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def gap_bound(self) -> int:
        return gap_bound(self.prob)

    @property
    def effective_prob(self) -> float:
        return effective_prob(self.prob)

    def state_bytes(self) -> int:
        """Persistent state: two dims, prob, seed and the distribution parameters."""
        n_params = 1 if isinstance(self.weight_dist, Homo) else 2
        return 8 * (4 + n_params)

    def _kernel_args(self):
        d = self.weight_dist
        if isinstance(d, Homo):
            code, a, b = _HOMO, float(d.w), 0.0
        elif isinstance(d, Uniform):
            code, a, b = _UNIFORM, float(d.w_low), float(d.w_high)
        else:
            code, a, b = _NORMAL, float(d.w_mu), float(d.w_sigma)
        return (np.uint64(self.seed), self.gap_bound, code, a, b)


# ---------------------------------------------------------------------------
# reference row generator (pure Python)
# ---------------------------------------------------------------------------

def _py_weight(sampler: RowSampler, base: int, code: int, a: float, b: float) -> float:
    if code == _HOMO:
        return a
    if code == _UNIFORM:
        return a + (b - a) * py_unit(sampler.at(base + 1))
    return a + b * py_normal(sampler.at(base + 1), sampler.at(base + 2))


def row_targets(spec: JitConnSpec, row: int) -> Iterator[tuple[int, float]]:
    """Yield ``(column, weight)`` pairs of one row, columns strictly increasing."""
    if not 0 <= row < spec.n_rows:
        raise IndexError(f"row {row} outside [0, {spec.n_rows})")
    _, k, code, a, b = spec._kernel_args()
    stride = _STRIDE[code]
    sampler = RowSampler(spec.seed, row)
    t = 0
    col = py_bounded(sampler.at(0), k) - 1
    while col < spec.n_cols:
        yield col, _py_weight(sampler, t * stride, code, a, b)
        t += 1
        col += py_bounded(sampler.at(t * stride), k)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@nb.njit(inline="always", cache=True)
def _weight(key, base, code, a, b):
    if code == 0:
        return a
    if code == 1:
        return a + (b - a) * nb_unit(nb_draw(key, base + 1))
    return a + b * nb_normal(nb_draw(key, base + 1), nb_draw(key, base + 2))


@nb.njit(cache=True)
def _row_counts(seed, k, code, n_rows, n_cols):
    stride = 1 if code == 0 else (2 if code == 1 else 3)
    counts = np.zeros(n_rows, dtype=np.int64)
    for i in range(n_rows):
        key = nb_stream_key(seed, i)
        t = 0
        col = nb_bounded(nb_draw(key, 0), k) - 1
        while col < n_cols:
            t += 1
            col += nb_bounded(nb_draw(key, t * stride), k)
        counts[i] = t
    return counts


@nb.njit(cache=True)
def _fill_rows(seed, k, code, a, b, n_cols, indptr, indices, data):
    stride = 1 if code == 0 else (2 if code == 1 else 3)
    for i in range(indptr.size - 1):
        key = nb_stream_key(seed, i)
        t = 0
        pos = indptr[i]
        col = nb_bounded(nb_draw(key, 0), k) - 1
        while col < n_cols:
            indices[pos] = col
            data[pos] = _weight(key, t * stride, code, a, b)
            pos += 1
            t += 1
            col += nb_bounded(nb_draw(key, t * stride), k)


@nb.njit(cache=True)
def _jit_scatter(seed, k, code, a, b, n_rows, n_cols, v, out):
    # non-event transpose product: every row regenerated and scaled
    stride = 1 if code == 0 else (2 if code == 1 else 3)
    for i in range(n_rows):
        key = nb_stream_key(seed, i)
        vi = v[i]
        t = 0
        col = nb_bounded(nb_draw(key, 0), k) - 1
        while col < n_cols:
            out[col] += _weight(key, t * stride, code, a, b) * vi
            t += 1
            col += nb_bounded(nb_draw(key, t * stride), k)


@nb.njit(cache=True)
def _jit_gather_row(seed, k, code, a, b, n_cols, i, v):
    stride = 1 if code == 0 else (2 if code == 1 else 3)
    key = nb_stream_key(seed, i)
    acc = 0.0
    t = 0
    col = nb_bounded(nb_draw(key, 0), k) - 1
    while col < n_cols:
        acc += _weight(key, t * stride, code, a, b) * v[col]
        t += 1
        col += nb_bounded(nb_draw(key, t * stride), k)
    return acc


@nb.njit(cache=True)
def _jit_gather(seed, k, code, a, b, n_rows, n_cols, v, out):
    for i in range(n_rows):
        out[i] = _jit_gather_row(seed, k, code, a, b, n_cols, i, v)


@nb.njit(cache=True, parallel=True)
def _jit_gather_par(seed, k, code, a, b, n_rows, n_cols, v, out):
    for i in nb.prange(n_rows):
        out[i] = _jit_gather_row(seed, k, code, a, b, n_cols, i, v)


@nb.njit(cache=True)
def _jit_event_scatter(seed, k, code, a, b, n_cols, events, out):
    stride = 1 if code == 0 else (2 if code == 1 else 3)
    draws = 0
    for i in range(events.size):
        if not events[i]:
            continue
        key = nb_stream_key(seed, i)
        t = 0
        col = nb_bounded(nb_draw(key, 0), k) - 1
        draws += 1
        while col < n_cols:
            out[col] += _weight(key, t * stride, code, a, b)
            draws += stride
            t += 1
            col += nb_bounded(nb_draw(key, t * stride), k)
    return draws


@nb.njit(cache=True)
def _jit_event_gather(seed, k, code, a, b, n_rows, n_cols, events, out):
    stride = 1 if code == 0 else (2 if code == 1 else 3)
    draws = 0
    for i in range(n_rows):
        key = nb_stream_key(seed, i)
        acc = 0.0
        t = 0
        col = nb_bounded(nb_draw(key, 0), k) - 1
        draws += 1
        while col < n_cols:
            if events[col]:
                acc += _weight(key, t * stride, code, a, b)
                draws += stride - 1
            draws += 1
            t += 1
            col += nb_bounded(nb_draw(key, t * stride), k)
        out[i] = acc
    return draws


@nb.njit(cache=True)
def _uniform_gap_sum(seed, k, n):
    key = nb_stream_key(seed, 0)
    total = 0
    for c in range(n):
        total += nb_bounded(nb_draw(key, c), k)
    return total


@nb.njit(cache=True)
def _geometric_gap_sum(seed, p, n):
    key = nb_stream_key(seed, 0)
    inv_log = 1.0 / math.log(1.0 - p)
    total = 0
    for c in range(n):
        u = 1.0 - nb_unit(nb_draw(key, c))
        g = np.int64(math.ceil(math.log(u) * inv_log))
        total += g if g > 1 else 1
    return total


# ---------------------------------------------------------------------------
# public operators
# ---------------------------------------------------------------------------

def materialize(spec: JitConnSpec, guard: int = MATERIALIZE_GUARD) -> CsrMatrix:
    """Expand the implied matrix into CSR (testing and baselines only)."""
    expected = spec.n_rows * spec.n_cols * spec.effective_prob
    if expected > guard:
        raise SizeGuardError(f"expected nnz {expected:.3g} exceeds guard {guard:.3g}")
    seed, k, code, a, b = spec._kernel_args()
    counts = _row_counts(seed, k, code, spec.n_rows, spec.n_cols)
    indptr = np.zeros(spec.n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    nnz = int(indptr[-1])
    indices = np.empty(nnz, dtype=np.int32)
    data = np.empty(nnz, dtype=np.float64)
    _fill_rows(seed, k, code, a, b, spec.n_cols, indptr, indices, data)
    weights = float(a) if code == _HOMO else data
    return CsrMatrix(spec.n_rows, spec.n_cols, indptr, indices, weights, check=False)


def _check(spec, n, transpose):
    expected = spec.n_rows if transpose else spec.n_cols
    if n != expected:
        raise DimensionError(f"input has {n} entries, operator expects {expected}")


def jitconn_matvec(spec: JitConnSpec, v, transpose=False):
    """``J @ v`` (or ``J.T @ v``) without storing ``J``."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError("input must be a vector")
    _check(spec, v.size, transpose)
    seed, k, code, a, b = spec._kernel_args()
    if transpose:
        out = np.zeros(spec.n_cols)
        _jit_scatter(seed, k, code, a, b, spec.n_rows, spec.n_cols, v, out)
    else:
        out = np.empty(spec.n_rows)
        fn = _jit_gather_par if parallel_enabled() else _jit_gather
        fn(seed, k, code, a, b, spec.n_rows, spec.n_cols, v, out)
    return out


def jitconn_event_matvec(spec: JitConnSpec, events, transpose=False, stats=None):
    """Event-driven form of :func:`jitconn_matvec`.

    ``transpose=True`` regenerates only the rows whose event bit is set and
    scatters them. If ``stats`` is a dict, the number of sampler draws made
    (gaps and weights) is stored under ``"draws"``.
    """
    e = _as_events(events)
    _check(spec, e.size, transpose)
    seed, k, code, a, b = spec._kernel_args()
    if transpose:
        out = np.zeros(spec.n_cols)
        draws = _jit_event_scatter(seed, k, code, a, b, spec.n_cols, e, out)
    else:
        out = np.empty(spec.n_rows)
        draws = _jit_event_gather(seed, k, code, a, b, spec.n_rows, spec.n_cols, e, out)
    if stats is not None:
        stats["draws"] = int(draws)
    return out


def jitconn_geometric_gap(p: float, u: float) -> int:
    """Geometric gap by CDF inversion: ``max(1, ceil(log(u) / log(1 - p)))``."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie in (0, 1)")
    return max(1, math.ceil(math.log(u) / math.log(1.0 - p)))


def uniform_gap_sum(p: float, n: int, seed: int = 0) -> int:
    """Sum of ``n`` uniform-gap draws from ``U[1, K]`` (sampler benchmark body)."""
    return int(_uniform_gap_sum(np.uint64(seed), gap_bound(p), int(n)))


def geometric_gap_sum(p: float, n: int, seed: int = 0) -> int:
    """Sum of ``n`` geometric-inversion gap draws (sampler benchmark body)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    return int(_geometric_gap_sum(np.uint64(seed), float(p), int(n)))
