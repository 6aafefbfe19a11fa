import math
import warnings

import numpy as np
import pytest

from oracles import naive_matvec
from spikekern.errors import DimensionError, SizeGuardError
from spikekern.jitconn import (Homo, JitConnSpec, Normal, Uniform, effective_prob, gap_bound, geometric_gap_sum,
                               jitconn_event_matvec, jitconn_geometric_gap, jitconn_matvec, materialize,
                               row_targets, uniform_gap_sum)
from spikekern.sparse import csrmv, event_csrmv, set_threads

DISTS = [Homo(0.5), Uniform(-1.0, 2.0), Normal(0.3, 0.7)]


def test_gap_bound_examples():
    assert gap_bound(0.1) == 19
    assert gap_bound(0.01) == 199
    assert gap_bound(0.5) == 3
    assert gap_bound(0.7) == 1 and gap_bound(1.0) == 1
    assert effective_prob(0.1) == pytest.approx(0.1)
    assert effective_prob(0.3) == pytest.approx(2 / 6)


def test_full_connectivity_when_bound_is_one():
    with pytest.warns(UserWarning):
        spec = JitConnSpec(7, 9, 0.8, Homo(2.0), 3)
    assert np.array_equal(materialize(spec).densify(), np.full((7, 9), 2.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        JitConnSpec(3, 3, 1.0, Homo(1.0), 0)


@pytest.mark.parametrize("kwargs", [dict(prob=0.0), dict(prob=1.5), dict(seed=-1), dict(n_rows=-1)])
def test_invalid_spec(kwargs):
    args = dict(n_rows=3, n_cols=3, prob=0.1, weight_dist=Homo(1.0), seed=0) | kwargs
    with pytest.raises(ValueError):
        JitConnSpec(**args)


def test_bad_distributions():
    with pytest.raises(ValueError):
        Uniform(1.0, 0.0)
    with pytest.raises(ValueError):
        Normal(0.0, -1.0)


@pytest.mark.parametrize("dist", DISTS)
def test_materialize_matches_python_generator(dist):
    spec = JitConnSpec(40, 300, 0.05, dist, 1234)
    dense = materialize(spec).densify()
    ref = np.zeros_like(dense)
    for r in range(spec.n_rows):
        for c, w in row_targets(spec, r):
            ref[r, c] = w
    assert np.array_equal(dense, ref)


@pytest.mark.parametrize("dist", DISTS)
def test_operators_bit_identical_to_materialized(rng, dist):
    spec = JitConnSpec(150, 220, 0.05, dist, 77)
    m = materialize(spec)
    for _ in range(20):
        v, u = rng.normal(size=220), rng.normal(size=150)
        assert np.array_equal(jitconn_matvec(spec, v), csrmv(m, v))
        assert np.array_equal(jitconn_matvec(spec, u, transpose=True), csrmv(m, u, transpose=True))
        e_cols, e_rows = rng.random(220) < 0.1, rng.random(150) < 0.1
        assert np.array_equal(jitconn_event_matvec(spec, e_cols), event_csrmv(m, e_cols))
        assert np.array_equal(jitconn_event_matvec(spec, e_rows, transpose=True),
                              event_csrmv(m, e_rows, transpose=True))


def test_matches_dense_oracle(rng):
    spec = JitConnSpec(30, 40, 0.2, Normal(0.0, 1.0), 9)
    dense = materialize(spec).densify()
    v = rng.normal(size=40)
    np.testing.assert_allclose(jitconn_matvec(spec, v), naive_matvec(dense, v), rtol=1e-12, atol=1e-12)


def test_repeated_calls_are_bit_identical(rng):
    spec = JitConnSpec(500, 500, 0.02, Uniform(0.0, 1.0), 2024)
    v = rng.normal(size=500)
    first = jitconn_matvec(spec, v, transpose=True)
    for _ in range(100):
        assert np.array_equal(jitconn_matvec(spec, v, transpose=True), first)


def test_single_event_probes_reconstruct_matrix():
    spec = JitConnSpec(60, 80, 0.1, Normal(1.0, 0.5), 5)
    dense = materialize(spec).densify()
    for r in range(spec.n_rows):
        e = np.zeros(spec.n_rows, dtype=bool)
        e[r] = True
        assert np.array_equal(jitconn_event_matvec(spec, e, transpose=True), dense[r])


def test_seed_changes_matrix():
    a = materialize(JitConnSpec(50, 50, 0.1, Homo(1.0), 1)).densify()
    b = materialize(JitConnSpec(50, 50, 0.1, Homo(1.0), 2)).densify()
    assert not np.array_equal(a, b)


@pytest.mark.parametrize("p", [0.01, 0.05, 0.1, 0.3])
def test_effective_density(p):
    n_rows, n_cols = 400, 2000
    m = materialize(JitConnSpec(n_rows, n_cols, p, Homo(1.0), 42))
    q = effective_prob(p)
    n = n_rows * n_cols
    assert abs(m.nnz / n - q) < 4 * math.sqrt(q * (1 - q) / n) + 1.0 / n_cols


def test_mean_gap_at_p_point_one():
    k = gap_bound(0.1)
    n = 10**6
    assert abs(uniform_gap_sum(0.1, n, seed=3) / n - (k + 1) / 2) < 4 * math.sqrt((k * k - 1) / 12 / n)


def test_weight_moments():
    u = materialize(JitConnSpec(300, 3000, 0.1, Uniform(-1.0, 3.0), 8)).weights
    assert abs(u.mean() - 1.0) < 4 * math.sqrt(16 / 12 / u.size)
    assert u.min() >= -1.0 and u.max() < 3.0
    g = materialize(JitConnSpec(300, 3000, 0.1, Normal(2.0, 0.5), 8)).weights
    assert abs(g.mean() - 2.0) < 4 * 0.5 / math.sqrt(g.size)
    assert abs(g.std() - 0.5) < 0.01


def test_geometric_gap_examples():
    assert jitconn_geometric_gap(0.5, 0.25) == 2
    assert jitconn_geometric_gap(0.5, 1 - 1e-12) == 1
    assert jitconn_geometric_gap(0.1, 0.5) == math.ceil(math.log(0.5) / math.log(0.9))
    with pytest.raises(ValueError):
        jitconn_geometric_gap(0.5, 0.0)
    with pytest.raises(ValueError):
        jitconn_geometric_gap(1.0, 0.5)
    n = 10**6
    assert abs(geometric_gap_sum(0.05, n, seed=1) / n - 20.0) < 4 * math.sqrt(0.95 / 0.05**2 / n)


@pytest.mark.parametrize("dist, stride", [(Homo(1.0), 1), (Uniform(0, 1), 2), (Normal(0, 1), 3)])
def test_event_draw_counts(rng, dist, stride):
    spec = JitConnSpec(100, 300, 0.05, dist, 6)
    m = materialize(spec)
    stats = {}
    jitconn_event_matvec(spec, np.zeros(100, bool), transpose=True, stats=stats)
    assert stats["draws"] == 0
    e = rng.random(100) < 0.2
    jitconn_event_matvec(spec, e, transpose=True, stats=stats)
    row_nnz = np.diff(m.indptr)
    assert stats["draws"] == int(np.sum(1 + stride * row_nnz[e]))


def test_dimension_and_size_guards():
    spec = JitConnSpec(10, 20, 0.1, Homo(1.0), 0)
    with pytest.raises(DimensionError):
        jitconn_matvec(spec, np.ones(10))
    with pytest.raises(DimensionError):
        jitconn_event_matvec(spec, np.ones(20, bool), transpose=True)
    with pytest.raises(SizeGuardError):
        materialize(JitConnSpec(10**5, 10**5, 0.1, Homo(1.0), 0), guard=10**6)
    assert spec.state_bytes() == 40
    assert JitConnSpec(10, 20, 0.1, Normal(0, 1), 0).state_bytes() == 48


def test_parallel_gather_identical(rng):
    spec = JitConnSpec(200, 300, 0.05, Normal(0, 1), 10)
    v = rng.normal(size=300)
    seq = jitconn_matvec(spec, v)
    set_threads(2)
    try:
        np.testing.assert_allclose(jitconn_matvec(spec, v), seq, rtol=1e-12, atol=1e-12)
    finally:
        set_threads(1)
