"""Neuron and synapse state updates.

Units: mV for potentials, ms for time; ``r`` is a dimensionless multiplier
so ``r * I`` is in mV. Every step returns a new state object and never
mutates its input, so monitors can hold on to snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DimensionError

__all__ = [
    "LifParams", "LifState", "lif_step",
    "GifParams", "GifState", "gif_step",
    "ExponSynState", "expon_decay", "expon_increment",
    "Coba", "Cuba", "syn_output",
    "surrogate_relu_grad",
]


def _check_dt(dt):
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")


# ---------------------------------------------------------------------------
# LIF
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LifParams:
    v_rest: float = -60.0
    v_reset: float = -60.0
    v_th: float = -50.0
    tau: float = 20.0
    tau_ref: float = 5.0
    r: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.tau_ref < 0:
            raise ValueError("tau_ref must be non-negative")
        if self.v_reset > self.v_th:
            raise ValueError("v_reset must not exceed v_th")


@dataclass(frozen=True)
class LifState:
    v: np.ndarray
    ref_until: np.ndarray
    spike: np.ndarray

    @classmethod
    def init(cls, v0):
        v0 = np.array(v0, dtype=np.float64)
        return cls(v0, np.full(v0.shape, -np.inf), np.zeros(v0.shape, dtype=bool))

    @property
    def size(self):
        return self.v.size


def lif_step(state: LifState, params: LifParams, input_current, t: float, dt: float) -> LifState:
    """Advance LIF neurons from ``t`` to ``t + dt`` by exponential Euler.

    The input current is held constant over the step. Neurons still
    refractory at ``t`` stay at ``v_reset``; a neuron fires when its new
    potential is strictly above ``v_th``.
    """
    _check_dt(dt)
    p = params
    drive = p.r * np.broadcast_to(np.asarray(input_current, dtype=np.float64), state.v.shape)
    target = p.v_rest + drive
    v = target + (state.v - target) * np.exp(-dt / p.tau)
    refractory = t < state.ref_until
    v = np.where(refractory, p.v_reset, v)
    spike = v > p.v_th
    v = np.where(spike, p.v_reset, v)
    ref_until = np.where(spike, t + p.tau_ref, state.ref_until)
    return LifState(v, ref_until, spike)


# ---------------------------------------------------------------------------
# GIF
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GifParams:
    a1: float = 0.0
    a2: float = -0.6
    tau_i1: float = 10.0
    tau_i2: np.ndarray = field(default_factory=lambda: np.array([1000.0]))
    tau_v: float = 20.0
    v_rest: float = 0.0
    v_th: float = 1.0
    r: float = 1.0

    def __post_init__(self):
        tau_i2 = np.asarray(self.tau_i2, dtype=np.float64)
        object.__setattr__(self, "tau_i2", tau_i2)
        if not (self.tau_i1 > 0 and self.tau_v > 0 and np.all(tau_i2 > 0)):
            raise ValueError("GIF time constants must be positive")

    @staticmethod
    def sample_tau_i2(rng: np.random.Generator, size, low=100.0, high=3000.0):
        return rng.uniform(low, high, size=size)


@dataclass(frozen=True)
class GifState:
    i1: np.ndarray
    i2: np.ndarray
    v: np.ndarray
    spike: np.ndarray

    @classmethod
    def init(cls, v0):
        v0 = np.array(v0, dtype=np.float64)
        z = np.zeros(v0.shape)
        return cls(z, z.copy(), v0, np.zeros(v0.shape, dtype=bool))

    @property
    def size(self):
        return self.v.size


def gif_step(state: GifState, params: GifParams, input_current, dt: float) -> GifState:
    """One step of the discrete modified-GIF update.

    ``I1 <- A1`` where the previous step spiked, otherwise decays;
    ``I2 <- a_I2 I2 + A2 z``; ``V <- a_V V + (V_rest + R (I1 + I2 + I_ext)) dt``;
    fire where ``V > V_th`` and reset those neurons to ``V_rest``. The
    additive term is taken exactly as written (not the exponential-Euler
    steady-state form), so ``V_rest`` is a fixed point only when it is 0.
    """
    _check_dt(dt)
    p = params
    i_ext = np.broadcast_to(np.asarray(input_current, dtype=np.float64), state.v.shape)
    a_i1 = np.exp(-dt / p.tau_i1)
    a_i2 = np.exp(-dt / p.tau_i2)
    a_v = np.exp(-dt / p.tau_v)
    z = state.spike
    i1 = np.where(z, p.a1, a_i1 * state.i1)
    i2 = a_i2 * state.i2 + p.a2 * z
    v = a_v * state.v + (p.v_rest + p.r * (i1 + i2 + i_ext)) * dt
    spike = v > p.v_th
    v = np.where(spike, p.v_rest, v)
    return GifState(i1, i2, v, spike)


# ---------------------------------------------------------------------------
# exponential synapse
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponSynState:
    g: np.ndarray
    tau_decay: float

    @classmethod
    def zeros(cls, size, tau_decay):
        return cls(np.zeros(int(size)), float(tau_decay))


def expon_decay(state: ExponSynState, dt: float) -> ExponSynState:
    _check_dt(dt)
    return ExponSynState(state.g * np.exp(-dt / state.tau_decay), state.tau_decay)


def expon_increment(state: ExponSynState, increments) -> ExponSynState:
    inc = np.asarray(increments, dtype=np.float64)
    if inc.shape != state.g.shape:
        raise DimensionError(f"increment shape {inc.shape} != state shape {state.g.shape}")
    return ExponSynState(state.g + inc, state.tau_decay)


@dataclass(frozen=True)
class Coba:
    e_rev: float


@dataclass(frozen=True)
class Cuba:
    pass


SynOutput = Union[Coba, Cuba]


def syn_output(g, v, out: SynOutput):
    """Synaptic current: ``g (E - V)`` for conductance-based, ``g`` for current-based."""
    g = np.asarray(g, dtype=np.float64)
    if isinstance(out, Cuba):
        return g.copy()
    v = np.asarray(v, dtype=np.float64)
    if g.shape != v.shape:
        raise DimensionError(f"conductance shape {g.shape} != potential shape {v.shape}")
    return g * (out.e_rev - v)


def surrogate_relu_grad(x, alpha=0.3, width=1.0):
    """Surrogate spike derivative ``max(0, alpha * (width - |x|))``."""
    if not (alpha > 0 and width > 0):
        raise ValueError("alpha and width must be positive")
    return np.maximum(0.0, alpha * (width - np.abs(x)))
