"""Operator microbenchmarks.

Every case first checks that the kernels agree on identical inputs, then
times them. Times are wall-clock nanoseconds from ``perf_counter_ns`` with
warm-up calls discarded; the median is the headline figure. Memory is the
analytic operator state, never process RSS.

CSV columns (stable, see ``CSV_FIELDS``)::

    case,kernel,n_rows,n_cols,density,rate_hz,reps,median_ns,mean_ns,
    p10_ns,p90_ns,state_bytes,checksum,note
"""

from __future__ import annotations

import csv
import hashlib
import io
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BenchmarkMismatch, SizeGuardError
from .jitconn import (Homo, JitConnSpec, effective_prob, gap_bound, geometric_gap_sum,
                      jitconn_event_matvec, jitconn_matvec, materialize, uniform_gap_sum)
from .sparse import CsrMatrix, csrmv, dense_matvec, event_csrmv, parallel_enabled

__all__ = [
    "BenchResult",
    "CSV_FIELDS",
    "bench_event_kernels",
    "bench_jitconn",
    "bench_gap_samplers",
    "poisson_events",
    "write_csv",
    "read_csv",
    "diff_results",
]

CSV_FIELDS = ("case", "kernel", "n_rows", "n_cols", "density", "rate_hz", "reps", "median_ns",
              "mean_ns", "p10_ns", "p90_ns", "state_bytes", "checksum", "note")

DENSE_GUARD_BYTES = 512 * 2**20
SPARSE_GUARD_NNZ = 2 * 10**7


@dataclass
class BenchResult:
    case: str
    kernel: str
    n_rows: int
    n_cols: int
    density: float
    rate_hz: float
    reps: int
    median_ns: float
    mean_ns: float
    p10_ns: float
    p90_ns: float
    state_bytes: int
    checksum: str
    note: str = ""
    extra: dict = field(default_factory=dict)

    def row(self):
        d = asdict(self)
        d.pop("extra")
        return d


def _checksum(out) -> str:
    return hashlib.sha1(np.ascontiguousarray(out, dtype=np.float64).tobytes()).hexdigest()[:16]


def _timed(fn, inputs, warmup=2):
    """Per-call ns for ``fn(x)`` over ``inputs``; the first calls are warm-up."""
    for x in inputs[:warmup]:
        fn(x)
    ns = np.empty(len(inputs), dtype=np.int64)
    for i, x in enumerate(inputs):
        t0 = time.perf_counter_ns()
        fn(x)
        ns[i] = time.perf_counter_ns() - t0
    return ns


def _result(case, kernel, shape, density, rate, ns, state_bytes, checksum, note="", scale=1.0, **extra):
    ns = ns.astype(np.float64) * scale
    return BenchResult(case, kernel, int(shape[0]), int(shape[1]), float(density), float(rate),
                       int(ns.size), float(np.median(ns)), float(ns.mean()),
                       float(np.percentile(ns, 10)), float(np.percentile(ns, 90)),
                       int(state_bytes), checksum, note, dict(extra))


def _agree(ref, out, tol):
    """Bit-equal, or equal within ``tol`` relative to the output scale."""
    if np.array_equal(ref, out):
        return True
    scale = max(1.0, float(np.max(np.abs(ref))) if ref.size else 1.0)
    return bool(np.max(np.abs(ref - out)) <= tol * scale)


def _tolerance():
    return 1e-10 if parallel_enabled() else 1e-12


def poisson_events(rng: np.random.Generator, n, rate_hz, dt_ms, count):
    """``count`` independent spike vectors; each neuron fires with prob ``rate * dt``."""
    p = rate_hz * dt_ms / 1000.0
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"rate {rate_hz} Hz with dt {dt_ms} ms is not a probability")
    return [rng.random(n) < p for _ in range(count)]


def _dense_columns(m: CsrMatrix, cols):
    """Dense ``M[:, :cols].T`` laid out for a row-major gather."""
    keep = m.indices < cols
    d = np.zeros((cols, m.n_rows))
    d[m.indices[keep], m.edge_rows()[keep]] = m.edge_weights()[keep]
    return d


# ---------------------------------------------------------------------------
# event-driven kernels
# ---------------------------------------------------------------------------

def bench_event_kernels(n=50_000, p=0.01, rates_hz=(10.0, 100.0, 1000.0), dt=0.1, reps=9, seed=0,
                        dense="auto", slab_cols=500, loop_steps=0):
    """Time ``dense_matvec``, ``csrmv`` and ``event_csrmv`` on the propagation
    ``M.T @ s`` for Poisson spike vectors at each rate.

    ``dense`` is ``"full"``, ``"slab"``, ``"skip"`` or ``"auto"`` (full when
    the matrix fits :data:`DENSE_GUARD_BYTES`, else slab). The slab mode times
    the first ``slab_cols`` outputs and scales the time by ``n / slab_cols``;
    its checksum covers only those outputs, and so do the others' in that
    mode. ``loop_steps > 0`` also records the event kernel over that many
    consecutive steps (the whole-loop figure) in ``extra``.
    """
    if n <= 0 or reps < 5:
        raise ValueError("n must be positive and reps at least 5")
    rng = np.random.default_rng(seed)
    m = materialize(JitConnSpec(n, n, p, Homo(1.0), int(rng.integers(2**63))))
    if dense == "auto":
        dense = "full" if n * n * 8 <= DENSE_GUARD_BYTES else "slab"
    if dense not in ("full", "slab", "skip"):
        raise ValueError(f"unknown dense mode {dense!r}")
    cols = n if dense != "slab" else min(slab_cols, n)
    dmat = None
    if dense == "full":
        dmat = np.ascontiguousarray(m.densify().T)
    elif dense == "slab":
        dmat = _dense_columns(m, cols)
    dense_bytes = n * n * 8
    results = []
    tol = _tolerance()
    for rate in rates_hz:
        patterns = poisson_events(rng, n, rate, dt, reps)
        density = float(np.mean([s.mean() for s in patterns]))
        case = f"event/n={n}/p={p:g}/rate={rate:g}"
        refs = [event_csrmv(m, s, transpose=True) for s in patterns]
        for s, ref in zip(patterns, refs):
            if not _agree(ref, csrmv(m, s.astype(np.float64), transpose=True), tol):
                raise BenchmarkMismatch(f"{case}: csrmv disagrees with event_csrmv")
            if dmat is not None and not _agree(ref[:cols], dense_matvec(dmat, s.astype(np.float64)), tol):
                raise BenchmarkMismatch(f"{case}: dense_matvec disagrees with event_csrmv")
        check = _checksum(np.concatenate([r[:cols] for r in refs]))
        floats = [s.astype(np.float64) for s in patterns]
        note = "slab" if dense == "slab" else ""
        if dmat is not None:
            ns = _timed(lambda v: dense_matvec(dmat, v), floats)
            results.append(_result(case, "dense", (n, n), density, rate, ns, dense_bytes, check,
                                   note=note, scale=n / cols))
        else:
            results.append(_result(case, "dense", (n, n), density, rate, np.zeros(reps), dense_bytes,
                                   "", note="skipped"))
        ns = _timed(lambda v: csrmv(m, v, transpose=True), floats)
        results.append(_result(case, "csrmv", (n, n), density, rate, ns, m.state_bytes(), check, note=note))
        ns = _timed(lambda s: event_csrmv(m, s, transpose=True), patterns)
        extra = {}
        if loop_steps > 0:
            # patterns are drawn in chunks outside the clock to bound memory
            loop_ns, done = 0, 0
            while done < loop_steps:
                chunk = poisson_events(rng, n, rate, dt, min(100, loop_steps - done))
                t0 = time.perf_counter_ns()
                for s in chunk:
                    event_csrmv(m, s, transpose=True)
                loop_ns += time.perf_counter_ns() - t0
                done += len(chunk)
            extra = {"loop_steps": loop_steps, "loop_ns": loop_ns}
        results.append(_result(case, "event_csrmv", (n, n), density, rate, ns, m.state_bytes(), check,
                               note=note, **extra))
    return results


# ---------------------------------------------------------------------------
# JIT connectivity
# ---------------------------------------------------------------------------

def _csr_bytes_analytic(n_rows, n_cols, prob, homogeneous):
    nnz = n_rows * n_cols * effective_prob(prob)
    return int(8 * (n_rows + 1) + 4 * nnz + (8 if homogeneous else 8 * nnz))


def bench_jitconn(shapes=(1_000, 10_000, 100_000), p=0.01, dist=Homo(1.0), reps=7, seed=0,
                  events_hz=None, dt=0.1, dense_guard=DENSE_GUARD_BYTES, sparse_guard=SPARSE_GUARD_NNZ):
    """Same implied matrix three ways: dense, materialized CSR, JIT.

    State bytes are analytic for every path, including skipped ones. The
    input vector is integer-valued so homogeneous integer weights give
    bit-equal outputs across all three kernels. With ``events_hz`` the
    event-driven propagation ``J.T @ s`` is timed too (``jitconn_event``
    and, when the CSR fits, ``event_csrmv``).
    """
    if reps < 5:
        raise ValueError("reps must be at least 5")
    results = []
    tol = _tolerance()
    for n in shapes:
        rows, cols = (n, n) if np.ndim(n) == 0 else (int(n[0]), int(n[1]))
        rng = np.random.default_rng([seed, rows, cols])
        spec = JitConnSpec(rows, cols, p, dist, seed)
        vs = [rng.integers(-3, 4, size=cols).astype(np.float64) for _ in range(reps)]
        refs = [jitconn_matvec(spec, v) for v in vs]
        check = _checksum(np.concatenate(refs))
        case = f"jitconn/{rows}x{cols}/p={p:g}"
        homo = isinstance(dist, Homo)

        dense_bytes = rows * cols * 8
        if dense_bytes <= dense_guard:
            d = materialize(spec).densify()
            for v, ref in zip(vs, refs):
                if not _agree(ref, dense_matvec(d, v), tol):
                    raise BenchmarkMismatch(f"{case}: dense disagrees with jitconn")
            ns = _timed(lambda v: dense_matvec(d, v), vs)
            results.append(_result(case, "dense", (rows, cols), p, 0, ns, dense_bytes, check))
            del d
        else:
            results.append(_result(case, "dense", (rows, cols), p, 0, np.zeros(reps), dense_bytes, "",
                                   note="skipped: size guard"))

        sparse_bytes = _csr_bytes_analytic(rows, cols, p, homo)
        m = None
        try:
            m = materialize(spec, guard=sparse_guard)
        except SizeGuardError:
            results.append(_result(case, "csrmv", (rows, cols), p, 0, np.zeros(reps), sparse_bytes, "",
                                   note="skipped: size guard"))
        else:
            for v, ref in zip(vs, refs):
                if not _agree(ref, csrmv(m, v), tol):
                    raise BenchmarkMismatch(f"{case}: csrmv disagrees with jitconn")
            ns = _timed(lambda v: csrmv(m, v), vs)
            results.append(_result(case, "csrmv", (rows, cols), p, 0, ns, sparse_bytes, check,
                                   measured_bytes=m.state_bytes()))

        ns = _timed(lambda v: jitconn_matvec(spec, v), vs)
        results.append(_result(case, "jitconn", (rows, cols), p, 0, ns, spec.state_bytes(), check))

        if events_hz is not None:
            events = poisson_events(rng, rows, events_hz, dt, reps)
            density = float(np.mean([e.mean() for e in events]))
            ev_refs = [jitconn_event_matvec(spec, e, transpose=True) for e in events]
            ev_check = _checksum(np.concatenate(ev_refs))
            ecase = f"{case}/rate={events_hz:g}"
            if m is not None:
                for e, ref in zip(events, ev_refs):
                    if not _agree(ref, event_csrmv(m, e, transpose=True), tol):
                        raise BenchmarkMismatch(f"{ecase}: event_csrmv disagrees with jitconn_event")
                ns = _timed(lambda e: event_csrmv(m, e, transpose=True), events)
                results.append(_result(ecase, "event_csrmv", (rows, cols), density, events_hz, ns,
                                       sparse_bytes, ev_check))
            ns = _timed(lambda e: jitconn_event_matvec(spec, e, transpose=True), events)
            results.append(_result(ecase, "jitconn_event", (rows, cols), density, events_hz, ns,
                                   spec.state_bytes(), ev_check))
        m = None
    return results


# ---------------------------------------------------------------------------
# gap samplers
# ---------------------------------------------------------------------------

def bench_gap_samplers(p=0.05, draws=10**7, reps=5, seed=0, check=True):
    """Uniform ``U[1, K]`` gaps versus geometric inversion, per-draw ns.

    Returns ``[uniform, geometric]``. With ``check`` the sample means must
    lie within 1% of ``(K + 1) / 2`` and ``1 / p``, and at ``p <= 0.1``
    the uniform sampler must be strictly faster (median); a failure raises
    :class:`BenchmarkMismatch`.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if reps < 5:
        raise ValueError("reps must be at least 5")
    k = gap_bound(p)
    out = []
    for name, fn, analytic in (("uniform_gap", uniform_gap_sum, (k + 1) / 2.0),
                               ("geometric_gap", geometric_gap_sum, 1.0 / p)):
        fn(p, 1000, seed)
        seeds = [seed + i for i in range(reps)]
        totals = []

        def call(s):
            totals.append(fn(p, draws, s))

        ns = _timed(call, seeds, warmup=0)
        mean_gap = float(np.mean(totals)) / draws
        out.append(_result(f"sampler/p={p:g}/draws={draws}", name, (1, draws), p, 0, ns, 0,
                           f"{mean_gap:.6f}", scale=1.0 / draws, mean_gap=mean_gap,
                           analytic_mean=analytic))
    if check:
        for r in out:
            rel = abs(r.extra["mean_gap"] - r.extra["analytic_mean"]) / r.extra["analytic_mean"]
            if rel > 0.01:
                raise BenchmarkMismatch(f"{r.kernel}: sample mean off by {rel:.2%}")
        if p <= 0.1 and not out[0].median_ns < out[1].median_ns:
            raise BenchmarkMismatch(f"uniform gap sampler not faster at p={p:g}: "
                                    f"{out[0].median_ns:.2f} vs {out[1].median_ns:.2f} ns/draw")
    return out


# ---------------------------------------------------------------------------
# CSV round trip and comparison
# ---------------------------------------------------------------------------

def write_csv(fh_or_path, results):
    own = isinstance(fh_or_path, (str, bytes)) or hasattr(fh_or_path, "__fspath__")
    fh = open(fh_or_path, "w", newline="", encoding="utf-8") if own else fh_or_path
    try:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in results:
            w.writerow(r.row())
    finally:
        if own:
            fh.close()


_INT_FIELDS = {"n_rows", "n_cols", "reps", "state_bytes"}
_FLOAT_FIELDS = {"density", "rate_hz", "median_ns", "mean_ns", "p10_ns", "p90_ns"}


def read_csv(path_or_text):
    text = path_or_text
    if "\n" not in str(path_or_text):
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_FIELDS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    rows = []
    for row in reader:
        for k in _INT_FIELDS:
            row[k] = int(row[k])
        for k in _FLOAT_FIELDS:
            row[k] = float(row[k])
        rows.append(row)
    return rows


def diff_results(old, new, time_tol=0.25):
    """Compare two benchmark CSVs keyed by ``(case, kernel)``.

    Returns a list of human-readable differences: missing or extra rows,
    checksum or state-byte changes, and median-time changes larger than
    ``time_tol`` (relative).
    """
    a = {(r["case"], r["kernel"]): r for r in read_csv(old)}
    b = {(r["case"], r["kernel"]): r for r in read_csv(new)}
    lines = []
    for key in sorted(a.keys() - b.keys()):
        lines.append(f"missing {key[0]} {key[1]}")
    for key in sorted(b.keys() - a.keys()):
        lines.append(f"added {key[0]} {key[1]}")
    for key in sorted(a.keys() & b.keys()):
        ra, rb = a[key], b[key]
        if ra["checksum"] != rb["checksum"]:
            lines.append(f"checksum {key[0]} {key[1]}: {ra['checksum']} -> {rb['checksum']}")
        if ra["state_bytes"] != rb["state_bytes"]:
            lines.append(f"state_bytes {key[0]} {key[1]}: {ra['state_bytes']} -> {rb['state_bytes']}")
        ta, tb = ra["median_ns"], rb["median_ns"]
        if ta > 0 and abs(tb - ta) / ta > time_tol:
            lines.append(f"median_ns {key[0]} {key[1]}: {ta:.0f} -> {tb:.0f} ({(tb - ta) / ta:+.0%})")
    return lines
