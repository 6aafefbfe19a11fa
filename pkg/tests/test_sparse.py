import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_matvec, random_csr
from spikekern.errors import CsrFormatError, DimensionError
from spikekern.sparse import (MAGIC, CsrMatrix, csrmv, dense_matvec, event_csrmv, event_csrmv_weight_grad,
                              load_csr, load_edge_list, save_csr, set_threads)


# -- storage ----------------------------------------------------------------

def test_from_coo_sorts_and_merges_duplicates():
    m = CsrMatrix.from_coo([1, 0, 1, 1], [2, 1, 0, 2], [1.0, 2.0, 3.0, 4.0], (2, 3))
    assert m.indptr.tolist() == [0, 1, 3]
    assert m.indices.tolist() == [1, 0, 2]
    assert m.weights.tolist() == [2.0, 3.0, 5.0]


def test_homogeneous_is_stored_once():
    m = CsrMatrix.from_coo([0, 1, 2], [0, 1, 2], 2.5, (3, 3))
    assert m.homogeneous and m.weights == 2.5
    assert m.state_bytes() == m.indptr.nbytes + m.indices.nbytes + 8
    dup = CsrMatrix.from_coo([0, 0], [1, 1], 2.0, (1, 2))
    assert not dup.homogeneous and dup.weights.tolist() == [4.0]


@pytest.mark.parametrize("indptr, indices, weights", [
    ([0, 2, 1], [0, 1], 1.0),
    ([1, 1, 2], [0, 1], 1.0),
    ([0, 1, 2], [0, 3], 1.0),
    ([0, 2, 2], [1, 0], 1.0),
    ([0, 2, 2], [1, 1], 1.0),
    ([0, 1, 2], [0, 1], [1.0]),
])
def test_invalid_csr_rejected(indptr, indices, weights):
    with pytest.raises(CsrFormatError):
        CsrMatrix(2, 3, indptr, indices, weights)


def test_transpose_round_trip(rng):
    for _ in range(50):
        m, dense = random_csr(rng)
        t = m.transpose()
        assert np.array_equal(t.densify(), dense.T)
        assert t.transpose() == m


# -- dense baseline -----------------------------------------------------------

def test_dense_matvec_examples(rng):
    assert dense_matvec(np.eye(3), np.array([1.0, 2.0, 3.0])).tolist() == [1.0, 2.0, 3.0]
    assert not dense_matvec(np.zeros((4, 2)), rng.normal(size=2)).any()
    m, v = rng.normal(size=(5, 4)), rng.normal(size=4)
    np.testing.assert_allclose(dense_matvec(m, v), naive_matvec(m, v), rtol=1e-12, atol=1e-14)
    with pytest.raises(DimensionError):
        dense_matvec(m, np.ones(5))


# -- csrmv ---------------------------------------------------------------------

def test_csrmv_examples():
    empty = CsrMatrix(3, 2, [0, 0, 0, 0], [], 1.0)
    assert csrmv(empty, np.ones(2)).tolist() == [0.0, 0.0, 0.0]
    eye = CsrMatrix.from_dense(np.eye(3), homogeneous=True)
    assert csrmv(CsrMatrix(3, 3, eye.indptr, eye.indices, 2.5), np.array([1.0, 0.0, 4.0])).tolist() == [2.5, 0.0, 10.0]


def test_csrmv_matches_dense_oracle(rng):
    for _ in range(200):
        m, dense = random_csr(rng)
        v = rng.normal(size=m.n_cols)
        u = rng.normal(size=m.n_rows)
        np.testing.assert_allclose(csrmv(m, v), naive_matvec(dense, v), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(csrmv(m, u, transpose=True), naive_matvec(dense.T, u),
                                   rtol=1e-12, atol=1e-12)


def test_csrmv_dimension_errors():
    m = CsrMatrix.from_dense(np.ones((2, 3)))
    with pytest.raises(DimensionError):
        csrmv(m, np.ones(2))
    with pytest.raises(DimensionError):
        csrmv(m, np.ones(3), transpose=True)


# -- event_csrmv -----------------------------------------------------------------

def test_no_events_means_no_weight_reads(rng):
    m, _ = random_csr(rng, density=0.3)
    for transpose in (False, True):
        stats = {}
        n_in = m.n_rows if transpose else m.n_cols
        out = event_csrmv(m, np.zeros(n_in, dtype=bool), transpose=transpose, stats=stats)
        assert not out.any()
        assert stats["weight_reads"] == 0


def test_weight_reads_count_only_active_edges(rng):
    m, dense = random_csr(rng, density=0.3)
    e = rng.random(m.n_rows) < 0.3
    stats = {}
    event_csrmv(m, e, transpose=True, stats=stats)
    assert stats["weight_reads"] == int(np.count_nonzero(dense[e]))


def test_single_event_selects_row_or_column(rng):
    m, dense = random_csr(rng, homogeneous=False)
    k = int(rng.integers(m.n_rows))
    e = np.zeros(m.n_rows, dtype=bool)
    e[k] = True
    assert np.array_equal(event_csrmv(m, e, transpose=True), dense[k])
    j = int(rng.integers(m.n_cols))
    e = np.zeros(m.n_cols, dtype=bool)
    e[j] = True
    assert np.array_equal(event_csrmv(m, e), dense[:, j])


@pytest.mark.parametrize("density", [0.001, 0.01, 0.1])
def test_event_matches_dense_oracle(rng, density):
    for i in range(167):
        integer = i % 2 == 0
        m, dense = random_csr(rng, integer=integer)
        for transpose, mat in ((False, dense), (True, dense.T)):
            e = rng.random(mat.shape[1]) < max(density, 1.0 / mat.shape[1])
            got = event_csrmv(m, e, transpose=transpose)
            want = naive_matvec(mat, e.astype(float))
            if integer:
                assert np.array_equal(got, want)
            else:
                np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)
            assert np.array_equal(got, csrmv(m, e.astype(float), transpose=transpose)) or integer is False


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_event_equals_cast_property(n_rows, n_cols, seed):
    r = np.random.default_rng(seed)
    dense = np.where(r.random((n_rows, n_cols)) < 0.2, r.integers(-3, 4, (n_rows, n_cols)), 0).astype(float)
    m = CsrMatrix.from_dense(dense)
    e = r.random(n_rows) < 0.3
    assert np.array_equal(event_csrmv(m, e, transpose=True), csrmv(m, e.astype(float), transpose=True))
    assert np.array_equal(event_csrmv(m, e, transpose=True), dense.T @ e.astype(float))


def test_event_accepts_integer_events():
    m = CsrMatrix.from_dense(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert event_csrmv(m, np.array([0, 1]), transpose=True).tolist() == [3.0, 4.0]
    with pytest.raises(DimensionError):
        event_csrmv(m, np.ones(3, dtype=bool))


def test_parallel_gather_matches_sequential(rng):
    m, _ = random_csr(rng, max_dim=64)
    v = rng.normal(size=m.n_cols)
    e = rng.random(m.n_cols) < 0.3
    seq, seq_e = csrmv(m, v), event_csrmv(m, e)
    set_threads(2)
    try:
        np.testing.assert_allclose(csrmv(m, v), seq, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(event_csrmv(m, e), seq_e, rtol=1e-12, atol=1e-12)
    finally:
        set_threads(1)


# -- weight gradient ---------------------------------------------------------------

def test_grad_examples():
    m = CsrMatrix.from_coo([0, 1], [0, 1], 1.5, (2, 2))
    assert event_csrmv_weight_grad(m, np.zeros(2, bool), np.ones(2), transpose=True) == 0.0
    assert event_csrmv_weight_grad(m, np.ones(2, bool), np.array([2.0, 5.0]), transpose=True) == 7.0
    with pytest.raises(DimensionError):
        event_csrmv_weight_grad(m, np.ones(2, bool), np.ones(3))


def _loss(m, e, cot, transpose):
    return float(cot @ event_csrmv(m, e, transpose=transpose))


def test_grad_matches_finite_differences(rng):
    h = 1e-6
    for i in range(120):
        m, _ = random_csr(rng, max_dim=12, homogeneous=i % 3 == 0, density=0.4)
        transpose = bool(i % 2)
        e = rng.random(m.n_rows if transpose else m.n_cols) < 0.5
        cot = rng.normal(size=m.n_cols if transpose else m.n_rows)
        grad = event_csrmv_weight_grad(m, e, cot, transpose=transpose)
        if m.homogeneous:
            up = CsrMatrix(m.n_rows, m.n_cols, m.indptr, m.indices, m.weights + h)
            dn = CsrMatrix(m.n_rows, m.n_cols, m.indptr, m.indices, m.weights - h)
            fd = (_loss(up, e, cot, transpose) - _loss(dn, e, cot, transpose)) / (2 * h)
            assert abs(grad - fd) <= 1e-5 * max(1.0, abs(fd))
            continue
        fd = np.empty(m.nnz)
        for j in range(m.nnz):
            w_up, w_dn = m.weights.copy(), m.weights.copy()
            w_up[j] += h
            w_dn[j] -= h
            up = CsrMatrix(m.n_rows, m.n_cols, m.indptr, m.indices, w_up)
            dn = CsrMatrix(m.n_rows, m.n_cols, m.indptr, m.indices, w_dn)
            fd[j] = (_loss(up, e, cot, transpose) - _loss(dn, e, cot, transpose)) / (2 * h)
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-5)


# -- files ---------------------------------------------------------------------

def test_binary_round_trip_and_layout(tmp_path, rng):
    for homogeneous in (True, False):
        m, _ = random_csr(rng, homogeneous=homogeneous)
        path = tmp_path / "m.csr"
        save_csr(path, m)
        raw = path.read_bytes()
        assert raw[:8] == MAGIC
        assert struct.unpack_from("<II", raw, 8) == (m.n_rows, m.n_cols)
        header_and_index = 16 + 4 * (m.n_rows + 1) + 4 * m.nnz
        assert raw[header_and_index] == (0 if homogeneous else 1)
        assert len(raw) == header_and_index + 1 + (8 if homogeneous else 8 * m.nnz)
        assert load_csr(path) == m


def test_corrupt_files_rejected(tmp_path, rng):
    m, _ = random_csr(rng, homogeneous=False, density=0.3)
    path = tmp_path / "m.csr"
    save_csr(path, m)
    raw = path.read_bytes()
    for bad in (b"NOTCSR!\x00" + raw[8:], raw + b"\x00", raw[:-3]):
        path.write_bytes(bad)
        with pytest.raises(CsrFormatError):
            load_csr(path)


def test_edge_list(tmp_path):
    p = tmp_path / "edges.txt"
    p.write_text("# header\n0 1\n2 0  # trailing\n\n1 1\n")
    m = load_edge_list(p)
    assert m.shape == (3, 2) and m.homogeneous
    assert m.densify().tolist() == [[0, 1], [0, 1], [1, 0]]
    p.write_text("0 1 0.5\n1 0 2.0\n")
    m = load_edge_list(p, shape=(2, 3))
    assert m.densify().tolist() == [[0, 0.5, 0], [2.0, 0, 0]]
    p.write_text("0 1 0.5\n1 0\n")
    with pytest.raises(CsrFormatError):
        load_edge_list(p)
