"""Delay buffers, AlignPre/AlignPost projections and the merge registry.

A projection is ``pre -> delay -> comm -> synapse -> output -> post``.
AlignPost keeps one exponential conductance per postsynaptic neuron and
feeds it the weighted spike counts coming out of ``comm``; AlignPre keeps
one trace per presynaptic neuron, driven by unit spikes, and sends the
trace through ``comm``. For exponential synapses with a single time
constant both give exactly the per-synapse conductances summed at the
target.

Projections whose states would evolve identically share a single
:class:`SynapseGroup` through :class:`MergeRegistry`. Groups are decayed by
the caller (the network scheduler) exactly once per step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .dynamics import Coba, Cuba, ExponSynState, SynOutput, expon_decay, expon_increment, syn_output
from .errors import ConfigError, DimensionError, MergeError
from .jitconn import JitConnSpec, jitconn_event_matvec, jitconn_matvec
from .sparse import CsrMatrix, csrmv, event_csrmv

ALIGN_PRE = "align_pre"
ALIGN_POST = "align_post"

Comm = Union[np.ndarray, CsrMatrix, JitConnSpec]


class DelayBuffer:
    """Ring of the last ``max_delay_steps + 1`` spike vectors of a population."""

    def __init__(self, size: int, max_delay_steps: int = 0):
        if max_delay_steps < 0:
            raise ValueError("max_delay_steps must be non-negative")
        self.size = int(size)
        self.max_delay_steps = int(max_delay_steps)
        self.ring = np.zeros((self.max_delay_steps + 1, self.size), dtype=bool)
        self.head = 0

    def write(self, spikes):
        spikes = np.asarray(spikes, dtype=bool)
        if spikes.shape != (self.size,):
            raise DimensionError(f"spike vector has shape {spikes.shape}, buffer holds {self.size}")
        self.head = (self.head + 1) % self.ring.shape[0]
        self.ring[self.head] = spikes
        return self

    def read(self, delay_steps: int = 0):
        """Spikes written ``delay_steps`` writes ago (0 = most recent)."""
        if not 0 <= delay_steps <= self.max_delay_steps:
            raise IndexError(f"delay {delay_steps} outside [0, {self.max_delay_steps}]")
        return self.ring[(self.head - delay_steps) % self.ring.shape[0]].copy()

    def state_bytes(self):
        return self.ring.size


def delay_write(buf: DelayBuffer, spikes) -> DelayBuffer:
    return buf.write(spikes)


# ---------------------------------------------------------------------------
# communication
# ---------------------------------------------------------------------------

def comm_shape(comm: Comm):
    if isinstance(comm, (CsrMatrix, JitConnSpec)):
        return comm.shape
    return np.shape(comm)


def comm_events(comm: Comm, spikes):
    """Postsynaptic input from a presynaptic spike vector (event kernels)."""
    if isinstance(comm, CsrMatrix):
        return event_csrmv(comm, spikes, transpose=True)
    if isinstance(comm, JitConnSpec):
        return jitconn_event_matvec(comm, spikes, transpose=True)
    return np.asarray(comm).T @ np.asarray(spikes, dtype=np.float64)


def comm_values(comm: Comm, x):
    """Postsynaptic input from a real-valued presynaptic vector."""
    if isinstance(comm, CsrMatrix):
        return csrmv(comm, x, transpose=True)
    if isinstance(comm, JitConnSpec):
        return jitconn_matvec(comm, x, transpose=True)
    return np.asarray(comm).T @ x


def comm_state_bytes(comm: Comm) -> int:
    if isinstance(comm, (CsrMatrix, JitConnSpec)):
        return comm.state_bytes()
    return int(np.asarray(comm).size) * 8


# ---------------------------------------------------------------------------
# projection description and shared synapse state
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProjectionSpec:
    """One projection; ``comm`` is pre-major with shape ``(pre size, post size)``."""

    pre: str
    post: str
    comm: Comm
    syn_tau: float
    out: SynOutput
    delay_steps: int = 0
    mode: str = ALIGN_POST
    name: str = ""

    def __post_init__(self):
        if self.mode not in (ALIGN_PRE, ALIGN_POST):
            raise ConfigError(f"unknown projection mode {self.mode!r}")
        if np.ndim(self.syn_tau) != 0:
            raise ConfigError("per-synapse time constants are not supported; "
                              "projections must have one homogeneous syn_tau")
        if not self.syn_tau > 0:
            raise ConfigError("syn_tau must be positive")
        if self.delay_steps < 0:
            raise ConfigError("delay_steps must be non-negative")
        if not isinstance(self.out, (Coba, Cuba)):
            raise ConfigError("out must be Coba or Cuba")

    def merge_key(self):
        if self.mode == ALIGN_POST:
            return (ALIGN_POST, self.post, float(self.syn_tau), self.out)
        return (ALIGN_PRE, self.pre, int(self.delay_steps), float(self.syn_tau))


class SynapseGroup:
    """Exponential conductance shared by every projection with the same merge key."""

    def __init__(self, key, size: int, tau: float, out=None):
        self.key = key
        self.state = ExponSynState.zeros(size, tau)
        self.out = out
        self.mode = ALIGN_POST if out is not None else ALIGN_PRE
        self.decay_calls = 0
        self.members: list[ProjectionSpec] = []

    @property
    def size(self):
        return self.state.g.size

    @property
    def tau(self):
        return self.state.tau_decay

    @property
    def g(self):
        return self.state.g

    def decay(self, dt):
        self.state = expon_decay(self.state, dt)
        self.decay_calls += 1

    def increment(self, inc):
        self.state = expon_increment(self.state, inc)

    def check(self, proj: ProjectionSpec):
        if float(proj.syn_tau) != self.tau:
            raise MergeError(f"projection {proj.name!r} has tau {proj.syn_tau}, shared state has {self.tau}")
        if proj.mode == ALIGN_POST and self.out is not None and proj.out != self.out:
            raise MergeError(f"projection {proj.name!r} output {proj.out} differs from shared {self.out}")

    def state_bytes(self):
        return 8 * self.size


class MergeRegistry:
    """Key -> shared :class:`SynapseGroup`; built once at network construction."""

    def __init__(self):
        self.groups: dict = {}

    def insert(self, key, size: int, tau: float, out=None):
        """Return ``(group, created)``; reuse the existing group when the key matches."""
        group = self.groups.get(key)
        if group is not None:
            if group.size != size:
                raise MergeError(f"key {key!r} registered with size {group.size}, requested {size}")
            return group, False
        group = SynapseGroup(key, size, tau, out)
        self.groups[key] = group
        return group, True

    def add_projection(self, proj: ProjectionSpec, pre_size: int, post_size: int, merge=True, uid=None):
        shape = comm_shape(proj.comm)
        if tuple(shape) != (pre_size, post_size):
            raise ConfigError(f"projection {proj.name!r}: comm shape {tuple(shape)} "
                              f"!= (pre {pre_size}, post {post_size})")
        key = proj.merge_key() if merge else (proj.merge_key(), uid)
        if proj.mode == ALIGN_POST:
            group, created = self.insert(key, post_size, proj.syn_tau, proj.out)
        else:
            group, created = self.insert(key, pre_size, proj.syn_tau)
        group.mode = proj.mode
        group.check(proj)
        group.members.append(proj)
        return group, created

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups.values())

    def scalar_count(self):
        return sum(g.size for g in self.groups.values())


def merge_registry_insert(registry: MergeRegistry, key, size, tau=1.0, out=None):
    return registry.insert(key, size, tau, out)


def decay_groups(groups, dt):
    """Scheduler hook: one decay per shared state per step."""
    for group in groups:
        group.decay(dt)


# ---------------------------------------------------------------------------
# per-step executors
# ---------------------------------------------------------------------------

def align_post_increment(proj: ProjectionSpec, group: SynapseGroup, delayed_spikes):
    group.check(proj)
    group.increment(comm_events(proj.comm, delayed_spikes))


def align_post_step(proj: ProjectionSpec, group: SynapseGroup, delayed_spikes, post_v):
    """Add this projection's weighted spikes to the (already decayed) shared
    conductance and return the group's output current."""
    align_post_increment(proj, group, delayed_spikes)
    return syn_output(group.g, post_v, proj.out)


def align_pre_increment(group: SynapseGroup, delayed_spikes):
    group.increment(np.asarray(delayed_spikes, dtype=np.float64))


def align_pre_current(proj: ProjectionSpec, group: SynapseGroup, post_v):
    group.check(proj)
    return syn_output(comm_values(proj.comm, group.g), post_v, proj.out)


def align_pre_step(proj: ProjectionSpec, group: SynapseGroup, delayed_spikes, post_v):
    """Unit-increment the (already decayed) presynaptic trace and return the
    current after sending it through ``comm``. When several projections
    share the group, increment once and call :func:`align_pre_current` for
    each of them instead."""
    align_pre_increment(group, delayed_spikes)
    return align_pre_current(proj, group, post_v)
