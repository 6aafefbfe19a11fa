"""Counter-based random streams.

Every value is a pure function of ``(seed, row, counter)``: a row's stream
key is the SplitMix64 finalizer applied to ``seed ^ ((row + 1) * GAMMA)`` and
draw ``k`` of that row is the finalizer applied to ``key + (k + 1) * GAMMA``
(all arithmetic modulo 2**64). Replaying a row therefore never depends on
which other rows were visited, or in what order.

The ``nb_*`` functions are numba-compiled and used inside kernels; the
``py_*`` functions are bit-identical pure-Python twins used by the
reference row generator.
"""

import math

import numba as nb
import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = 0xFFFFFFFFFFFFFFFF
TWO_PI = 2.0 * math.pi
INV_2_53 = 1.0 / 9007199254740992.0

_GAMMA = np.uint64(GAMMA)
_MIX1 = np.uint64(MIX1)
_MIX2 = np.uint64(MIX2)
_ONE = np.uint64(1)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_S32 = np.uint64(32)


# ---------------------------------------------------------------------------
# numba versions
# ---------------------------------------------------------------------------

@nb.njit(inline="always", cache=True)
def nb_mix(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@nb.njit(inline="always", cache=True)
def nb_stream_key(seed, row):
    return nb_mix(seed ^ ((np.uint64(row) + _ONE) * _GAMMA))


@nb.njit(inline="always", cache=True)
def nb_draw(key, counter):
    return nb_mix(key + (np.uint64(counter) + _ONE) * _GAMMA)


@nb.njit(inline="always", cache=True)
def nb_bounded(x, k):
    """Map a 64-bit word onto ``[1, k]`` by multiply-shift of its top 32 bits."""
    return np.int64(((x >> _S32) * np.uint64(k)) >> _S32) + 1


@nb.njit(inline="always", cache=True)
def nb_unit(x):
    """Uniform double in [0, 1) from the top 53 bits."""
    return np.float64(x >> _S11) * INV_2_53


@nb.njit(inline="always", cache=True)
def nb_normal(x1, x2):
    u1 = 1.0 - nb_unit(x1)
    u2 = nb_unit(x2)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(TWO_PI * u2)


# ---------------------------------------------------------------------------
# pure-Python twins
# ---------------------------------------------------------------------------

def py_mix(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def py_stream_key(seed: int, row: int) -> int:
    return py_mix(seed ^ (((row + 1) * GAMMA) & MASK64))


def py_draw(key: int, counter: int) -> int:
    return py_mix(key + (counter + 1) * GAMMA)


def py_bounded(x: int, k: int) -> int:
    return (((x >> 32) * k) >> 32) + 1


def py_unit(x: int) -> float:
    return (x >> 11) * INV_2_53


def py_normal(x1: int, x2: int) -> float:
    u1 = 1.0 - py_unit(x1)
    u2 = py_unit(x2)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(TWO_PI * u2)


class RowSampler:
    """Replayable draw stream for one ``(seed, row)`` pair."""

    def __init__(self, seed: int, row: int):
        self.seed = int(seed) & MASK64
        self.row = int(row)
        self.key = py_stream_key(self.seed, self.row)
        self.draw_counter = 0

    def at(self, counter: int) -> int:
        """Raw 64-bit word at an absolute counter position."""
        return py_draw(self.key, counter)

    def next_u64(self) -> int:
        x = py_draw(self.key, self.draw_counter)
        self.draw_counter += 1
        return x

    def integer(self, k: int) -> int:
        """Uniform integer in ``[1, k]``."""
        if k < 1:
            raise ValueError("bound must be at least 1")
        return py_bounded(self.next_u64(), k)

    def uniform(self) -> float:
        return py_unit(self.next_u64())

    def normal(self) -> float:
        x1 = self.next_u64()
        x2 = self.next_u64()
        return py_normal(x1, x2)
