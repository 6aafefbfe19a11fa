"""Declarative networks and the step-driven simulator.

A :class:`NetworkConfig` is plain data (loadable from a YAML document, see
``configs/`` and the README for the schema). :class:`Network` builds the
runtime objects from it; :func:`simulate` runs a config to completion.

Every random quantity derives from ``seed``: membrane initial values,
Poisson inputs, GIF slow time constants and, unless given explicitly, the
per-projection connectivity seeds. The resolved values end up in
``SimulationResult.manifest``.

Per-step order: read delayed spikes, decay shared synapse states, apply
projection increments, compute currents, step neurons, write the new spikes
into the delay buffers, record monitors.
"""

from __future__ import annotations

import copy
import json
import math
import os
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import yaml

from .dynamics import (Coba, Cuba, GifParams, GifState, LifParams, LifState, gif_step, lif_step,
                       syn_output)
from .errors import ConfigError, SimulationError
from .jitconn import Homo, JitConnSpec, Normal, Uniform, materialize
from .projections import (ALIGN_POST, ALIGN_PRE, DelayBuffer, MergeRegistry, ProjectionSpec,
                          SynapseGroup, align_post_increment, align_pre_current,
                          align_pre_increment, comm_state_bytes, decay_groups)
from .sparse import CsrMatrix, load_csr, load_edge_list

__all__ = [
    "NetworkConfig",
    "Network",
    "SimulationResult",
    "build_ei_net",
    "simulate",
    "state_byte_count",
    "load_config",
    "config_from_dict",
    "config_to_dict",
    "write_raster",
    "write_monitors",
    "write_manifest",
]

_LIF_KEYS = {"v_rest", "v_reset", "v_th", "tau", "tau_ref", "r"}
_GIF_KEYS = {"a1", "a2", "tau_i1", "tau_i2", "tau_v", "v_rest", "v_th", "r"}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class PopulationConfig:
    id: str
    size: int
    model: str = "LIF"
    params: dict = field(default_factory=dict)
    v_init: dict = field(default_factory=lambda: {"kind": "const", "value": None})


@dataclass
class ProjectionConfig:
    pre: str
    post: str
    comm: dict
    syn_tau: float
    out: dict = field(default_factory=lambda: {"kind": "cuba"})
    delay_steps: int = 0
    mode: str = ALIGN_POST
    name: str = ""


@dataclass
class InputConfig:
    target: str
    kind: str
    value: float = 0.0
    rate_hz: float = 0.0
    weight: float = 1.0
    tau: float = 5.0
    e_rev: Optional[float] = None


@dataclass
class MonitorConfig:
    target: str
    signal: str
    indices: Optional[list] = None


@dataclass
class NetworkConfig:
    dt: float
    duration: float
    seed: int = 0
    populations: list = field(default_factory=list)
    projections: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    monitors: list = field(default_factory=list)
    merge: bool = True
    base_dir: Optional[str] = None

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt))

    def population(self, pid):
        for p in self.populations:
            if p.id == pid:
                return p
        raise ConfigError(f"unknown population {pid!r}")

    def validate(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.duration < 0:
            raise ConfigError("duration must be non-negative")
        ids = [p.id for p in self.populations]
        if len(set(ids)) != len(ids):
            raise ConfigError("population ids must be unique")
        for p in self.populations:
            if p.size <= 0:
                raise ConfigError(f"population {p.id!r} must have positive size")
            model = p.model.upper()
            if model not in ("LIF", "GIF"):
                raise ConfigError(f"population {p.id!r}: unknown model {p.model!r}")
            allowed = _LIF_KEYS if model == "LIF" else _GIF_KEYS
            extra = set(p.params) - allowed
            if extra:
                raise ConfigError(f"population {p.id!r}: unknown parameters {sorted(extra)}")
        for proj in self.projections:
            for end in (proj.pre, proj.post):
                if end not in ids:
                    raise ConfigError(f"projection {proj.name!r} references unknown population {end!r}")
            if proj.mode not in (ALIGN_PRE, ALIGN_POST):
                raise ConfigError(f"projection {proj.name!r}: unknown mode {proj.mode!r}")
            if np.ndim(proj.syn_tau) != 0:
                raise ConfigError(f"projection {proj.name!r}: syn_tau must be a single value")
        for inp in self.inputs:
            if inp.target not in ids:
                raise ConfigError(f"input references unknown population {inp.target!r}")
            if inp.kind not in ("constant", "poisson"):
                raise ConfigError(f"unknown input kind {inp.kind!r}")
        for mon in self.monitors:
            if mon.target not in ids:
                raise ConfigError(f"monitor references unknown population {mon.target!r}")
            if mon.signal not in ("spikes", "v", "rate"):
                raise ConfigError(f"unknown monitor signal {mon.signal!r}")
        return self


def _parse_out(out):
    if isinstance(out, str):
        out = {"kind": out}
    kind = str(out.get("kind", "cuba")).lower()
    if kind == "coba":
        return {"kind": "coba", "e_rev": float(out["e_rev"])}
    if kind == "cuba":
        return {"kind": "cuba"}
    raise ConfigError(f"unknown synaptic output {kind!r}")


def config_from_dict(d: dict, base_dir=None) -> NetworkConfig:
    try:
        cfg = NetworkConfig(
            dt=float(d["dt"]),
            duration=float(d["duration"]),
            seed=int(d.get("seed", 0)),
            merge=bool(d.get("merge", True)),
            base_dir=base_dir,
        )
        for p in d.get("populations", []):
            v_init = p.get("v_init", {"kind": "const", "value": None})
            if not isinstance(v_init, dict):
                v_init = {"kind": "const", "value": float(v_init)}
            cfg.populations.append(PopulationConfig(
                id=str(p["id"]), size=int(p["size"]), model=str(p.get("model", "LIF")),
                params=dict(p.get("params", {})), v_init=v_init))
        for i, p in enumerate(d.get("projections", [])):
            cfg.projections.append(ProjectionConfig(
                pre=str(p["pre"]), post=str(p["post"]), comm=dict(p["comm"]),
                syn_tau=p["syn_tau"], out=_parse_out(p.get("out", "cuba")),
                delay_steps=int(p.get("delay_steps", 0)), mode=str(p.get("mode", ALIGN_POST)),
                name=str(p.get("name", f"{p['pre']}->{p['post']}#{i}"))))
        for p in d.get("inputs", []):
            cfg.inputs.append(InputConfig(**p))
        for p in d.get("monitors", []):
            cfg.monitors.append(MonitorConfig(**p))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed network config: {exc}") from exc
    return cfg.validate()


def config_to_dict(cfg: NetworkConfig) -> dict:
    d = asdict(cfg)
    d.pop("base_dir")
    return d


def load_config(path) -> NetworkConfig:
    with open(path) as fh:
        d = yaml.safe_load(fh)
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected a key-value document")
    return config_from_dict(d, base_dir=os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# EI balance network
# ---------------------------------------------------------------------------

def build_ei_net(scale=1.0, comm_kind="jitconn", seed=0, duration=100.0, dt=0.1,
                 input_current=20.0, monitors=("spikes", "rate")) -> NetworkConfig:
    """COBA-LIF excitatory/inhibitory network with expected in-degree 80.

    ``3200 * scale`` excitatory and ``800 * scale`` inhibitory neurons;
    excitatory synapses 0.6 / 5 ms / 0 mV, inhibitory 6.7 / 10 ms / -80 mV;
    every neuron gets a constant input current each step.
    """
    if not scale > 0:
        raise ConfigError("scale must be positive")
    n_exc = int(3200 * scale)
    n_inh = int(800 * scale)
    num = int(4000 * scale)
    if n_exc == 0 or n_inh == 0:
        raise ConfigError(f"scale {scale} gives an empty population")
    prob = 80.0 / num
    if prob > 1.0:
        warnings.warn(f"connection probability {prob:g} exceeds 1 at scale {scale}; clamped to 1",
                      stacklevel=2)
        prob = 1.0
    if comm_kind not in ("jitconn", "sparse", "dense"):
        raise ConfigError(f"unknown comm kind {comm_kind!r}")
    lif = {"v_rest": -60.0, "v_reset": -60.0, "v_th": -50.0, "tau": 20.0, "tau_ref": 5.0, "r": 1.0}
    v_init = {"kind": "normal", "mean": -55.0, "std": 2.0}
    pops = [PopulationConfig("E", n_exc, "LIF", dict(lif), dict(v_init)),
            PopulationConfig("I", n_inh, "LIF", dict(lif), dict(v_init))]
    projs = []
    for pre, w, tau, e_rev in (("E", 0.6, 5.0, 0.0), ("I", 6.7, 10.0, -80.0)):
        for post in ("E", "I"):
            projs.append(ProjectionConfig(
                pre=pre, post=post,
                comm={"kind": comm_kind, "prob": prob, "dist": "homo", "weight": w},
                syn_tau=tau, out={"kind": "coba", "e_rev": e_rev},
                delay_steps=0, mode=ALIGN_POST, name=f"{pre}->{post}"))
    inputs = [InputConfig(target=p, kind="constant", value=float(input_current)) for p in ("E", "I")]
    mons = [MonitorConfig(target=p, signal=s) for s in monitors for p in ("E", "I")]
    return NetworkConfig(dt=dt, duration=duration, seed=int(seed), populations=pops,
                         projections=projs, inputs=inputs, monitors=mons).validate()


# ---------------------------------------------------------------------------
# runtime
# ---------------------------------------------------------------------------

def _seed_stream(master, *path):
    return np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, *path])


def _derived_seed(master, *path) -> int:
    return int(_seed_stream(master, *path).generate_state(1, np.uint64)[0])


def _weight_dist(comm: dict):
    dist = str(comm.get("dist", "homo")).lower()
    if dist == "homo":
        return Homo(float(comm["weight"]))
    if dist == "uniform":
        return Uniform(float(comm["w_low"]), float(comm["w_high"]))
    if dist == "normal":
        return Normal(float(comm["w_mu"]), float(comm["w_sigma"]))
    raise ConfigError(f"unknown weight distribution {dist!r}")


class _Population:
    def __init__(self, cfg: PopulationConfig, rng: np.random.Generator, offset: int):
        self.id = cfg.id
        self.size = cfg.size
        self.offset = offset
        self.model = cfg.model.upper()
        self.resolved = {}
        if self.model == "LIF":
            self.params = LifParams(**cfg.params)
            default_v = self.params.v_rest
        else:
            params = dict(cfg.params)
            tau_i2 = params.pop("tau_i2", {"low": 100.0, "high": 3000.0})
            if isinstance(tau_i2, dict):
                tau_i2 = GifParams.sample_tau_i2(rng, cfg.size, tau_i2["low"], tau_i2["high"])
            tau_i2 = np.broadcast_to(np.asarray(tau_i2, dtype=np.float64), (cfg.size,)).copy()
            self.params = GifParams(tau_i2=tau_i2, **params)
            self.resolved["tau_i2"] = tau_i2.tolist()
            default_v = self.params.v_rest
        kind = cfg.v_init.get("kind", "const")
        if kind == "normal":
            v0 = rng.normal(cfg.v_init["mean"], cfg.v_init["std"], size=cfg.size)
        elif kind == "const":
            value = cfg.v_init.get("value")
            v0 = np.full(cfg.size, default_v if value is None else float(value))
        else:
            raise ConfigError(f"unknown v_init kind {kind!r}")
        self.state = LifState.init(v0) if self.model == "LIF" else GifState.init(v0)

    @property
    def v(self):
        return self.state.v

    @property
    def spike(self):
        return self.state.spike

    def step(self, current, t, dt):
        if self.model == "LIF":
            self.state = lif_step(self.state, self.params, current, t, dt)
        else:
            self.state = gif_step(self.state, self.params, current, dt)

    def state_bytes(self):
        per_neuron = 8 + 8 + 1 if self.model == "LIF" else 8 * 4 + 1
        return per_neuron * self.size


@dataclass
class SimulationResult:
    dt: float
    n_steps: int
    raster: np.ndarray
    traces: dict
    timing: dict
    state_bytes: dict
    manifest: dict
    offsets: dict
    sizes: dict
    conductances: Optional[list] = None
    group_keys: Optional[list] = None

    def spike_counts(self):
        counts = {}
        for pid, off in self.offsets.items():
            ids = self.raster[:, 1]
            counts[pid] = int(np.count_nonzero((ids >= off) & (ids < off + self.sizes[pid])))
        return counts

    def mean_rates(self):
        """Mean firing rate per population in Hz."""
        seconds = self.n_steps * self.dt / 1000.0
        if seconds == 0:
            return {pid: 0.0 for pid in self.sizes}
        return {pid: c / self.sizes[pid] / seconds for pid, c in self.spike_counts().items()}


class Network:
    """Runtime objects for a :class:`NetworkConfig`."""

    def __init__(self, cfg: NetworkConfig):
        cfg.validate()
        self.cfg = cfg
        self.dt = cfg.dt
        self.step_index = 0
        self.resolved_seeds = {"master": int(cfg.seed)}

        self.pops: dict[str, _Population] = {}
        offset = 0
        for i, pc in enumerate(cfg.populations):
            rng = np.random.default_rng(_seed_stream(cfg.seed, 0, i))
            self.pops[pc.id] = _Population(pc, rng, offset)
            offset += pc.size

        self.registry = MergeRegistry()
        self.projections: list[tuple[ProjectionSpec, SynapseGroup]] = []
        max_delay = {pid: 0 for pid in self.pops}
        for i, pc in enumerate(cfg.projections):
            pre, post = self.pops[pc.pre], self.pops[pc.post]
            comm = self._build_comm(pc, i, pre.size, post.size)
            out = Coba(pc.out["e_rev"]) if pc.out["kind"] == "coba" else Cuba()
            spec = ProjectionSpec(pre=pc.pre, post=pc.post, comm=comm, syn_tau=float(pc.syn_tau),
                                  out=out, delay_steps=pc.delay_steps, mode=pc.mode, name=pc.name)
            group, _ = self.registry.add_projection(spec, pre.size, post.size, merge=cfg.merge, uid=i)
            self.projections.append((spec, group))
            max_delay[pc.pre] = max(max_delay[pc.pre], pc.delay_steps)
        self.delays = {pid: DelayBuffer(self.pops[pid].size, d) for pid, d in max_delay.items()}

        # Poisson drives: one-to-one exponential synapses owned by the network
        self.poisson = []
        for i, ic in enumerate(cfg.inputs):
            if ic.kind != "poisson":
                continue
            size = self.pops[ic.target].size
            group = SynapseGroup(("input", i), size, ic.tau,
                                 Coba(ic.e_rev) if ic.e_rev is not None else Cuba())
            seed = _derived_seed(cfg.seed, 2, i)
            self.resolved_seeds[f"input[{i}]"] = seed
            self.poisson.append((ic, group, np.random.default_rng(seed)))
        self.constant = {}
        for ic in cfg.inputs:
            if ic.kind == "constant":
                self.constant[ic.target] = self.constant.get(ic.target, 0.0) + float(ic.value)

        self._all_groups = list(self.registry) + [g for _, g, _ in self.poisson]
        self._group_members = {id(g): [p for p, gg in self.projections if gg is g] for g in self.registry}

    def _build_comm(self, pc: ProjectionConfig, index, n_pre, n_post):
        comm = pc.comm
        kind = str(comm.get("kind", "jitconn")).lower()
        if "file" in comm:
            path = comm["file"]
            if self.cfg.base_dir and not os.path.isabs(path):
                path = os.path.join(self.cfg.base_dir, path)
            m = load_csr(path) if path.endswith(".csr") else load_edge_list(path, shape=(n_pre, n_post))
            if kind == "dense":
                return m.densify()
            return m
        seed = comm.get("seed")
        if seed is None:
            seed = _derived_seed(self.cfg.seed, 1, index)
        seed = int(seed)
        self.resolved_seeds[f"projection[{index}]"] = seed
        spec = JitConnSpec(n_pre, n_post, float(comm["prob"]), _weight_dist(comm), seed)
        if kind == "jitconn":
            return spec
        m = materialize(spec)
        if kind == "sparse":
            return m
        if kind == "dense":
            return m.densify()
        raise ConfigError(f"unknown comm kind {kind!r}")

    # -- stepping -----------------------------------------------------------

    def step(self, timing=None):
        """Advance the network by one step and return the spike vectors."""
        dt = self.dt
        t = self.step_index * dt
        clock = time.perf_counter
        t0 = clock()

        delayed = {}
        for spec, _ in self.projections:
            k = (spec.pre, spec.delay_steps)
            if k not in delayed:
                delayed[k] = self.delays[spec.pre].read(spec.delay_steps)
        t1 = clock()

        decay_groups(self._all_groups, dt)
        pre_done = set()
        for spec, group in self.projections:
            spikes = delayed[(spec.pre, spec.delay_steps)]
            if spec.mode == ALIGN_POST:
                align_post_increment(spec, group, spikes)
            elif id(group) not in pre_done:
                align_pre_increment(group, spikes)
                pre_done.add(id(group))
        for ic, group, rng in self.poisson:
            fired = rng.random(group.size) < ic.rate_hz * dt / 1000.0
            group.increment(ic.weight * fired)

        currents = {pid: np.zeros(p.size) for pid, p in self.pops.items()}
        for group in self.registry:
            members = self._group_members[id(group)]
            if group.mode == ALIGN_POST:
                post = members[0].post
                currents[post] += syn_output(group.g, self.pops[post].v, group.out)
            else:
                for spec in members:
                    currents[spec.post] += align_pre_current(spec, group, self.pops[spec.post].v)
        for ic, group, _ in self.poisson:
            currents[ic.target] += syn_output(group.g, self.pops[ic.target].v, group.out)
        for pid, value in self.constant.items():
            currents[pid] += value
        t2 = clock()

        for pid, pop in self.pops.items():
            pop.step(currents[pid], t, dt)
            if not np.all(np.isfinite(pop.v)):
                raise SimulationError(f"non-finite membrane potential in {pid!r} at step "
                                      f"{self.step_index}", step=self.step_index)
        t3 = clock()

        for pid, pop in self.pops.items():
            self.delays[pid].write(pop.spike)
        self.step_index += 1
        t4 = clock()
        if timing is not None:
            timing["delays"] += (t1 - t0) + (t4 - t3)
            timing["synapses"] += t2 - t1
            timing["neurons"] += t3 - t2
        return {pid: pop.spike for pid, pop in self.pops.items()}

    def group_conductances(self):
        """Copy of every shared synapse state, in registry order."""
        return [g.g.copy() for g in self.registry]

    # -- accounting ---------------------------------------------------------

    def state_bytes(self):
        neurons = sum(p.state_bytes() for p in self.pops.values())
        synapses = sum(g.state_bytes() for g in self._all_groups)
        comm = sum(comm_state_bytes(spec.comm) for spec, _ in self.projections)
        delays = sum(b.state_bytes() for b in self.delays.values())
        return {"neurons": neurons, "synapses": synapses, "comm": comm, "delays": delays,
                "total": neurons + synapses + comm + delays}

    def manifest(self):
        resolved = {pid: p.resolved for pid, p in self.pops.items() if p.resolved}
        return {"config": config_to_dict(self.cfg), "seeds": self.resolved_seeds,
                "resolved_params": resolved}


def state_byte_count(net) -> dict:
    """Analytic per-component byte tally (counts x element width)."""
    if isinstance(net, NetworkConfig):
        net = Network(net)
    return net.state_bytes()


def simulate(cfg: NetworkConfig, record_conductances=False) -> SimulationResult:
    net = Network(cfg)
    n_steps = cfg.n_steps
    timing = {"build": 0.0, "delays": 0.0, "synapses": 0.0, "neurons": 0.0, "monitors": 0.0}
    raster_steps, raster_ids = [], []
    traces: dict[str, list] = {}
    spike_pops = {m.target for m in cfg.monitors if m.signal == "spikes"}
    if not cfg.monitors:
        spike_pops = set(net.pops)
    rate_mons = [m for m in cfg.monitors if m.signal == "rate"]
    v_mons = [m for m in cfg.monitors if m.signal == "v"]
    cond = [] if record_conductances else None

    start = time.perf_counter()
    for step in range(n_steps):
        spikes = net.step(timing)
        tm = time.perf_counter()
        for pid in spike_pops:
            idx = np.flatnonzero(spikes[pid])
            if idx.size:
                raster_steps.append(np.full(idx.size, step, dtype=np.int64))
                raster_ids.append(idx + net.pops[pid].offset)
        for m in rate_mons:
            rate = spikes[m.target].mean() / (cfg.dt / 1000.0)
            traces.setdefault(f"{m.target}.rate", []).append(rate)
        for m in v_mons:
            v = net.pops[m.target].v
            idx = range(v.size) if m.indices is None else m.indices
            for i in idx:
                traces.setdefault(f"{m.target}.v[{i}]", []).append(float(v[i]))
        if cond is not None:
            cond.append(net.group_conductances())
        timing["monitors"] += time.perf_counter() - tm
    timing["total"] = time.perf_counter() - start

    if raster_steps:
        order_steps = np.concatenate(raster_steps)
        order_ids = np.concatenate(raster_ids)
        order = np.lexsort((order_ids, order_steps))
        raster = np.stack([order_steps[order], order_ids[order]], axis=1)
    else:
        raster = np.zeros((0, 2), dtype=np.int64)
    conductances = None
    if cond is not None:
        n_groups = len(net.registry)
        conductances = [np.stack([c[i] for c in cond]) if cond else np.zeros((0, g.size))
                        for i, g in zip(range(n_groups), net.registry)]
    return SimulationResult(
        dt=cfg.dt, n_steps=n_steps, raster=raster,
        traces={k: np.asarray(v) for k, v in traces.items()}, timing=timing,
        state_bytes=net.state_bytes(), manifest=net.manifest(),
        offsets={pid: p.offset for pid, p in net.pops.items()},
        sizes={pid: p.size for pid, p in net.pops.items()},
        conductances=conductances,
        group_keys=[g.key for g in net.registry])


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------

def write_raster(path, result: SimulationResult):
    with open(path, "w", encoding="utf-8") as fh:
        for step, nid in result.raster:
            fh.write(f"{step}\t{nid}\n")


def write_monitors(path, result: SimulationResult):
    names = list(result.traces)
    cols = [result.traces[k] for k in names]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(["step"] + names) + "\n")
        for step in range(result.n_steps):
            fh.write(",".join([str(step)] + [repr(float(c[step])) for c in cols]) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def write_manifest(path, result: SimulationResult):
    doc = copy.deepcopy(result.manifest)
    doc["state_bytes"] = result.state_bytes
    doc["n_steps"] = result.n_steps
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")
