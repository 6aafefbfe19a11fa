"""Slow, obviously-correct reference implementations used only by the tests."""

import math

import numpy as np

from spikekern.sparse import CsrMatrix


def naive_matvec(m, v):
    """Double loop, summing columns from the last to the first."""
    rows, cols = len(m), len(m[0]) if len(m) else 0
    out = [0.0] * rows
    for i in range(rows):
        acc = 0.0
        for j in reversed(range(cols)):
            acc += float(m[i][j]) * float(v[j])
        out[i] = acc
    return np.array(out)


def random_csr(rng, max_dim=64, homogeneous=None, integer=False, density=None):
    n_rows = int(rng.integers(1, max_dim + 1))
    n_cols = int(rng.integers(1, max_dim + 1))
    density = rng.uniform(0.0, 0.5) if density is None else density
    mask = rng.random((n_rows, n_cols)) < density
    if homogeneous is None:
        homogeneous = bool(rng.integers(2))
    if homogeneous:
        w = float(rng.integers(-4, 5)) if integer else float(rng.normal())
        dense = np.where(mask, w, 0.0)
        r, c = np.nonzero(mask)
        return CsrMatrix.from_coo(r, c, w, (n_rows, n_cols)), dense
    vals = rng.integers(-4, 5, size=mask.shape).astype(float) if integer else rng.normal(size=mask.shape)
    vals[vals == 0] = 1.0
    dense = np.where(mask, vals, 0.0)
    return CsrMatrix.from_dense(dense), dense


def lif_first_spike(v_rest, v_th, tau, r, current):
    """Closed-form first-passage time from rest under constant current."""
    return -tau * math.log(1.0 - (v_th - v_rest) / (r * current))


def per_synapse_conductance(spike_history, weights, delays, tau, dt):
    """Explicit sum over every synapse and every past spike.

    ``spike_history`` is ``T x m`` (pre spikes written at each step),
    ``weights`` is ``m x n`` and ``delays`` the integer step delay per
    projection. A spike written at step ``s`` is first seen by the synapse
    ``delay`` steps later (one step for delay 0) and from then on
    contributes ``w * exp(-(t - arrival) dt / tau)`` at step ``t``.
    """
    T, m = spike_history.shape
    n = weights.shape[1]
    g = np.zeros((T, n))
    for t in range(T):
        for s in range(T):
            arrival = s + delays + 1
            if arrival > t:
                continue
            for i in np.flatnonzero(spike_history[s]):
                g[t] += weights[i] * math.exp(-(t - arrival) * dt / tau)
    return g


def per_synapse_simulation(spike_history, weights, delay, tau, dt):
    """Step every one of the ``m x n`` synapse variables on its own.

    Same arrival convention as :func:`per_synapse_conductance`; returns the
    summed postsynaptic conductance at every step.
    """
    T, _ = spike_history.shape
    factor = math.exp(-dt / tau)
    g_syn = np.zeros(weights.shape)
    mask = weights != 0
    out = np.zeros((T, weights.shape[1]))
    for t in range(T):
        g_syn *= factor
        s = t - delay - 1
        if s >= 0:
            for i in np.flatnonzero(spike_history[s]):
                g_syn[i, mask[i]] += weights[i, mask[i]]
        out[t] = g_syn.sum(axis=0)
    return out
