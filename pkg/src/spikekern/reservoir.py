"""Echo-state reservoir on JIT connectivity, FORCE (RLS) and ridge readouts.

``x(t) = (1 - alpha) x(t-1) + alpha f(W_in u(t) + W_rec x(t-1))`` and
``y(t) = W_out x(t)``. ``W_in`` is ``Uniform(-s, s)`` and ``W_rec`` is
``Normal(0, rho / sqrt(n_res p_rec))``, both regenerated on the fly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import DimensionError
from .jitconn import JitConnSpec, Normal, Uniform, jitconn_matvec, materialize

__all__ = [
    "ReservoirParams",
    "Reservoir",
    "RlsState",
    "reservoir_step",
    "readout",
    "force_init",
    "force_update",
    "ridge_fit",
    "nrmse",
    "sine_task",
    "memory_task",
    "train_reservoir",
]

FORCE_DELTA = 0.1


@dataclass(frozen=True)
class ReservoirParams:
    n_in: int
    n_res: int
    n_out: int = 1
    alpha: float = 0.6
    rho: float = 1.3
    input_scale: float = 0.3
    p_in: float = 0.1
    p_rec: float = 0.1
    seed: int = 0
    activation: Callable = field(default=np.tanh, compare=False)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if min(self.n_in, self.n_res, self.n_out) <= 0:
            raise ValueError("sizes must be positive")

    @property
    def sigma_rec(self):
        return self.rho / np.sqrt(self.n_res * self.p_rec)


class Reservoir:
    """Holds the two connectivity specs; no weight matrix is stored."""

    def __init__(self, params: ReservoirParams):
        self.params = params
        seeds = np.random.SeedSequence(int(params.seed)).generate_state(2, np.uint64)
        s = params.input_scale
        self.w_in = JitConnSpec(params.n_res, params.n_in, params.p_in, Uniform(-s, s), int(seeds[0]))
        self.w_rec = JitConnSpec(params.n_res, params.n_res, params.p_rec,
                                 Normal(0.0, params.sigma_rec), int(seeds[1]))

    def step(self, x, u):
        return reservoir_step(x, self, u)

    def run(self, inputs, x0=None):
        """States for a ``T x n_in`` input sequence (teacher forced)."""
        inputs = np.asarray(inputs, dtype=np.float64).reshape(len(inputs), -1)
        x = np.zeros(self.params.n_res) if x0 is None else np.asarray(x0, dtype=np.float64)
        states = np.empty((len(inputs), self.params.n_res))
        for t, u in enumerate(inputs):
            x = self.step(x, u)
            states[t] = x
        return states

    def dense_weights(self):
        """Materialized ``(W_in, W_rec)`` for oracle checks."""
        return materialize(self.w_in).densify(), materialize(self.w_rec).densify()


def reservoir_step(x, reservoir: Reservoir, u):
    p = reservoir.params
    u = np.asarray(u, dtype=np.float64).ravel()
    x = np.asarray(x, dtype=np.float64)
    if u.size != p.n_in:
        raise DimensionError(f"input has {u.size} entries, reservoir expects {p.n_in}")
    if x.shape != (p.n_res,):
        raise DimensionError(f"state has shape {x.shape}, reservoir has {p.n_res} units")
    pre = jitconn_matvec(reservoir.w_in, u) + jitconn_matvec(reservoir.w_rec, x)
    return (1.0 - p.alpha) * x + p.alpha * p.activation(pre)


def readout(x, w_out):
    w_out = np.asarray(w_out, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if w_out.ndim != 2 or w_out.shape[1] != x.shape[-1]:
        raise DimensionError(f"readout {w_out.shape} does not match state {x.shape}")
    return w_out @ x


@dataclass
class RlsState:
    p_mat: np.ndarray
    w_out: np.ndarray


def force_init(n_res, n_out=1, delta=FORCE_DELTA) -> RlsState:
    """``P = I / delta`` and zero readout."""
    return RlsState(np.eye(n_res) / delta, np.zeros((n_out, n_res)))


def force_update(rls: RlsState, x, target) -> RlsState:
    """One recursive-least-squares step without forgetting."""
    x = np.asarray(x, dtype=np.float64)
    target = np.atleast_1d(np.asarray(target, dtype=np.float64))
    if x.shape != (rls.p_mat.shape[0],) or target.shape != (rls.w_out.shape[0],):
        raise DimensionError("state or target does not match the readout shape")
    with np.errstate(invalid="ignore", over="ignore"):
        px = rls.p_mat @ x
        k = px / (1.0 + x @ px)
        p_mat = rls.p_mat - np.outer(k, px)
        err = rls.w_out @ x - target
        w_out = rls.w_out - np.outer(err, k)
    if not (np.all(np.isfinite(w_out)) and np.all(np.isfinite(p_mat))):
        raise FloatingPointError("FORCE update diverged (non-finite weights)")
    return RlsState(p_mat, w_out)


def ridge_fit(states, targets, lam):
    """``W_out`` minimizing ``|X W^T - Y|^2 + lam |W|^2`` (rows of X are states)."""
    x = np.asarray(states, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if x.ndim != 2 or x.shape[0] < 1 or y.shape[0] != x.shape[0]:
        raise DimensionError("states and targets must share the time dimension")
    gram = x.T @ x + lam * np.eye(x.shape[1])
    rhs = x.T @ y
    try:
        with np.errstate(invalid="ignore", divide="ignore"):
            if lam > 0:
                w = scipy.linalg.solve(gram, rhs, assume_a="pos")
            else:
                w = scipy.linalg.solve(gram, rhs)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise np.linalg.LinAlgError("singular ridge system; use lam > 0") from exc
    if not np.all(np.isfinite(w)):
        raise np.linalg.LinAlgError("singular ridge system; use lam > 0")
    return w.T


def nrmse(pred, target):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    return float(np.sqrt(np.mean((pred - target) ** 2)) / np.std(target))


# ---------------------------------------------------------------------------
# desk-scale tasks
# ---------------------------------------------------------------------------

SINE_PERIODS = (5.0, 5.0 * np.sqrt(2.0), 5.0 * (1 + np.sqrt(5.0)) / 2)


def sine_task(n_steps, periods=SINE_PERIODS):
    """Sum of incommensurate sinusoids, scaled into [-1, 1]."""
    t = np.arange(n_steps)
    return sum(np.sin(2 * np.pi * t / p) for p in periods) / len(periods)


def memory_task(n_steps, delay=10, seed=0):
    """Uniform random input in [-1, 1]; target is the input ``delay`` steps ago."""
    u = np.random.default_rng(seed).uniform(-1.0, 1.0, n_steps)
    y = np.zeros(n_steps)
    y[delay:] = u[:-delay]
    return u, y


def _with_bias(u):
    return np.array([u, 1.0])


def train_reservoir(task="sine", method="force", n_res=400, rho=1.0, alpha=0.9, p_rec=0.1,
                    seed=0, input_scale=0.1, p_in=1.0, washout=300, train=4000, test=1000,
                    teacher_noise=1e-3, lam=FORCE_DELTA):
    """Run one desk task end to end and report the test NRMSE.

    Inputs are ``[u, 1]`` (a constant bias channel). ``sine``: the reservoir
    is teacher forced with the previous target value (plus a little noise)
    while the readout learns the next one; the test window then runs closed
    loop, feeding the readout back as input. ``memory``: the readout
    recalls the input from 10 steps earlier; the test window stays driven.

    For ``force`` the report includes ``ridge_gap``, the largest absolute
    difference between the online weights and :func:`ridge_fit` on the
    recorded training states with ``lam``.
    """
    if task not in ("sine", "memory"):
        raise ValueError(f"unknown task {task!r}")
    if method not in ("force", "ridge"):
        raise ValueError(f"unknown method {method!r}")
    params = ReservoirParams(n_in=2, n_res=n_res, alpha=alpha, rho=rho, input_scale=input_scale,
                             p_in=p_in, p_rec=p_rec, seed=seed)
    res = Reservoir(params)
    total = washout + train + test + 1
    if task == "sine":
        target = sine_task(total)
        drive = target.copy()
    else:
        drive, target = memory_task(total, seed=seed)
    noise = np.random.default_rng([seed, 1]).normal(0.0, teacher_noise, total)

    x = np.zeros(n_res)
    for t in range(1, washout + 1):
        x = res.step(x, _with_bias(drive[t - 1] if task == "sine" else drive[t]))

    rls = force_init(n_res, 1, lam) if method == "force" else None
    states = np.empty((train, n_res))
    errors = np.empty(train)
    for i, t in enumerate(range(washout + 1, washout + train + 1)):
        u = drive[t - 1] + noise[t] if task == "sine" else drive[t]
        x = res.step(x, _with_bias(u))
        states[i] = x
        if rls is not None:
            errors[i] = abs(float(rls.w_out[0] @ x) - target[t])
            rls = force_update(rls, x, target[t])
    y_train = target[washout + 1:washout + train + 1]
    ridge = ridge_fit(states, y_train, lam)
    if rls is not None:
        w_out = rls.w_out
        ridge_gap = float(np.max(np.abs(w_out - ridge)))
    else:
        w_out = ridge
        errors = np.abs(states @ w_out[0] - y_train)
        ridge_gap = 0.0

    pred = np.empty(test)
    prev = float(w_out[0] @ x)
    for i, t in enumerate(range(washout + train + 1, total)):
        u = prev if task == "sine" else drive[t]
        x = res.step(x, _with_bias(u))
        prev = float(w_out[0] @ x)
        pred[i] = prev
    score = nrmse(pred, target[washout + train + 1:])
    return {"task": task, "method": method, "n_res": n_res, "rho": rho, "alpha": alpha,
            "p_rec": p_rec, "seed": seed, "train_steps": train, "test_steps": test,
            "nrmse": score, "train_nrmse": nrmse(states @ w_out[0], y_train),
            "ridge_gap": ridge_gap, "errors": errors, "w_out": w_out, "prediction": pred}
