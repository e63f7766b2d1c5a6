import io

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from cabcd.sparse import (BlockSelector, CsrMatrix, LibsvmParseError, condition_number,
                          extract_cols, extract_rows, gram_cols, gram_rows, is_symmetric,
                          parse_libsvm, spmv, spmv_t, write_libsvm)
from conftest import PARSE_EXAMPLE, random_instance


class Tally:
    def __init__(self):
        self.charged = 0
        self.actual = 0

    def add_flops(self, charged, actual=None):
        self.charged += charged
        self.actual += charged if actual is None else actual


def parse_example():
    return parse_libsvm(PARSE_EXAMPLE, expected_features=3)


# ---------------------------------------------------------------- parsing

def test_parse_example():
    X, y = parse_example()
    assert X.shape == (3, 2)
    assert X.nnz == 3
    np.testing.assert_array_equal(X.toarray(), [[0.5, 0.0], [0.0, 1.0], [2.0, 0.0]])
    np.testing.assert_array_equal(y, [1.0, -1.0])
    X.validate()


def test_parse_empty_stream():
    X, y = parse_libsvm("")
    assert X.shape == (0, 0)
    assert y.size == 0


def test_parse_infers_dimension_and_skips_blank_lines():
    X, y = parse_libsvm("\n2.5 4:1\r\n\n0 1:3 2:-1\n")
    assert X.shape == (4, 2)
    np.testing.assert_array_equal(y, [2.5, 0.0])
    assert X.toarray()[3, 0] == 1.0


@pytest.mark.parametrize("text,line,fragment", [
    ("1 1:1\n1 3:1 2:1", 2, "not increasing"),
    ("1 1:1 1:2", 1, "not increasing"),
    ("1 0:1", 1, "1-based"),
    ("1 1:1\nabc 1:1", 2, "bad label"),
    ("1 1-1", 1, "malformed"),
    ("1 a:1", 1, "malformed"),
    ("1 1:x", 1, "malformed"),
    ("1 1:nan", 1, "non-finite"),
    ("1 5:1", 1, "exceeds"),
])
def test_parse_errors_name_line(text, line, fragment):
    with pytest.raises(LibsvmParseError) as ei:
        parse_libsvm(text, expected_features=4)
    assert ei.value.line_no == line
    assert f"line {line}" in str(ei.value)
    assert fragment in str(ei.value)


def test_libsvm_round_trip_bit_exact():
    X, _, y = random_instance(15, 25, 0.3, seed=3)
    y = y * np.pi
    buf = io.StringIO()
    write_libsvm(X, y, buf)
    X2, y2 = parse_libsvm(buf.getvalue(), expected_features=X.n_rows)
    assert X2.shape == X.shape and X2.nnz == X.nnz
    np.testing.assert_array_equal(X2.row_offsets, X.row_offsets)
    np.testing.assert_array_equal(X2.col_indices, X.col_indices)
    assert X2.values.tobytes() == X.values.tobytes()
    assert y2.tobytes() == y.tobytes()


# ---------------------------------------------------------------- structure

def test_validate_rejects_bad_structure():
    X = CsrMatrix(2, 2, np.array([0, 2, 1]), np.array([0]), np.array([1.0]))
    with pytest.raises(ValueError):
        X.validate()
    X = CsrMatrix(1, 3, np.array([0, 2]), np.array([2, 1]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError, match="strictly increasing"):
        X.validate()
    X = CsrMatrix(1, 2, np.array([0, 1]), np.array([5]), np.array([1.0]))
    with pytest.raises(ValueError, match="out of range"):
        X.validate()


def test_density():
    X, _ = parse_example()
    assert X.density == pytest.approx(0.5)
    assert CsrMatrix.empty(0, 0).density == 0.0


def test_block_selector_invariants():
    s = BlockSelector(np.array([1, 4]), 5)
    assert len(s) == 2
    assert s == BlockSelector([1, 4], 5)
    with pytest.raises(ValueError):
        BlockSelector(np.array([3, 1]), 5)
    with pytest.raises(ValueError):
        BlockSelector(np.array([], dtype=int), 5)
    with pytest.raises(IndexError):
        BlockSelector(np.array([0, 5]), 5)


# ---------------------------------------------------------------- kernels

def test_spmv_examples(diag2):
    X, _ = diag2
    np.testing.assert_array_equal(spmv(X, np.array([3.0, 4.0])), [3, 8])
    np.testing.assert_array_equal(spmv_t(X, np.array([3.0, 4.0])), [3, 8])
    P, _ = parse_example()
    np.testing.assert_array_equal(spmv(P, np.ones(2)), [0.5, 1.0, 2.0])
    np.testing.assert_array_equal(spmv_t(P, np.ones(3)), [2.5, 1.0])


def test_spmv_matches_dense_and_charges():
    X, Xd, _ = random_instance(20, 30, 0.25, seed=11)
    rng = np.random.default_rng(0)
    v, u = rng.standard_normal(30), rng.standard_normal(20)
    t = Tally()
    assert np.max(np.abs(spmv(X, v, t) - Xd @ v)) <= 1e-12
    assert np.max(np.abs(spmv_t(X, u, t) - Xd.T @ u)) <= 1e-12
    assert t.charged == 4 * X.nnz


def test_spmv_dimension_mismatch(diag2):
    X, _ = diag2
    with pytest.raises(ValueError):
        spmv(X, np.ones(3))
    with pytest.raises(ValueError):
        spmv_t(X, np.ones(3))


def test_extract_rows_and_cols():
    X, _ = parse_example()
    assert extract_rows(X, BlockSelector(np.arange(3), 3)).toarray().tolist() == X.toarray().tolist()
    np.testing.assert_array_equal(extract_rows(X, BlockSelector([2], 3)).toarray(), [[2.0, 0.0]])
    np.testing.assert_array_equal(extract_cols(X, BlockSelector(np.arange(2), 2)).toarray(), X.toarray())
    np.testing.assert_array_equal(extract_cols(X, BlockSelector([1], 2)).toarray(), [[0.0], [1.0], [0.0]])
    Y, Yd, _ = random_instance(20, 30, 0.2, seed=5)
    rows = np.array([1, 4, 7, 12, 19])
    np.testing.assert_array_equal(extract_rows(Y, BlockSelector(rows, 20)).toarray(), Yd[rows])
    cols = np.array([0, 3, 29])
    np.testing.assert_array_equal(extract_cols(Y, BlockSelector(cols, 30)).toarray(), Yd[:, cols])
    # repeated rows through the raw-index path (used for stacked s-step blocks)
    np.testing.assert_array_equal(extract_rows(Y, np.array([3, 3, 0])).toarray(), Yd[[3, 3, 0]])


def test_extract_rejects_mismatched_selector():
    X, _ = parse_example()
    with pytest.raises(ValueError):
        extract_rows(X, BlockSelector([0], 2))
    with pytest.raises(IndexError):
        extract_rows(X, np.array([3]))


def test_gram_examples(diag2):
    X, _ = diag2
    np.testing.assert_array_equal(gram_rows(X, 0.5), [[0.5, 0.0], [0.0, 2.0]])
    Y, _, _ = random_instance(8, 30, 0.3, seed=2)
    assert not np.any(gram_rows(Y, 0.0))
    with pytest.raises(ValueError):
        gram_rows(CsrMatrix.empty(0, 3), 1.0)


def test_gram_matches_dense_and_is_symmetric():
    Y, Yd, _ = random_instance(8, 30, 0.3, seed=9)
    t = Tally()
    G = gram_rows(Y, 0.25, t)
    assert np.max(np.abs(G - 0.25 * Yd @ Yd.T)) <= 1e-12
    assert np.array_equal(G, G.T)
    assert t.charged == 2 * 8 * Y.nnz
    assert t.actual <= t.charged
    Gc = gram_cols(Y, 2.0)
    assert np.max(np.abs(Gc - 2.0 * Yd.T @ Yd)) <= 1e-12
    assert np.array_equal(Gc, Gc.T)


def test_condition_number():
    assert condition_number(np.eye(4)) == 1.0
    assert condition_number(np.diag([1.0, 4.0])) == pytest.approx(4.0)
    rng = np.random.default_rng(1)
    B = rng.standard_normal((10, 10))
    A = B.T @ B + 0.1 * np.eye(10)
    ev = np.linalg.eigvals(A).real
    assert condition_number(A) == pytest.approx(ev.max() / ev.min(), rel=1e-8)
    assert condition_number(np.diag([1.0, 0.0])) == np.inf
    with pytest.raises(ValueError):
        condition_number(np.array([[1.0, 2.0], [0.0, 1.0]]))
    assert is_symmetric(A)


# ---------------------------------------------------------------- properties

@st.composite
def sparse_matrices(draw, max_dim=30):
    d = draw(st.integers(1, max_dim))
    n = draw(st.integers(1, max_dim))
    dens = draw(st.floats(0.05, 1.0))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    S = sp.random(d, n, density=dens, random_state=np.random.default_rng(seed), format="csr")
    return CsrMatrix.from_scipy(S)


@settings(max_examples=60, deadline=None)
@given(sparse_matrices(max_dim=100), st.integers(0, 2 ** 32 - 1))
def test_spmv_t_is_spmv_of_transpose(X, seed):
    v = np.random.default_rng(seed).standard_normal(X.n_rows)
    a = spmv_t(X, v)
    b = spmv(CsrMatrix.from_dense(X.toarray().T), v)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * (1 + np.abs(b).max(initial=0)))


@settings(max_examples=60, deadline=None)
@given(sparse_matrices(max_dim=30), st.data())
def test_extract_then_gram_matches_brute_force(X, data):
    b = data.draw(st.integers(1, min(8, X.n_rows)))
    rows = np.sort(data.draw(st.lists(st.integers(0, X.n_rows - 1), min_size=b, max_size=b, unique=True)))
    scale = data.draw(st.floats(0.01, 10.0))
    G = gram_rows(extract_rows(X, BlockSelector(rows, X.n_rows)), scale)
    Xd = X.toarray()[rows]
    brute = np.array([[scale * sum(Xd[i, k] * Xd[j, k] for k in range(X.n_cols))
                       for j in range(b)] for i in range(b)])
    assert np.allclose(G, brute, rtol=1e-12, atol=1e-12)
    assert np.array_equal(G, G.T)


@settings(max_examples=40, deadline=None)
@given(sparse_matrices(max_dim=20), st.lists(st.floats(-1e6, 1e6), min_size=20, max_size=20))
def test_libsvm_round_trip_property(X, labels):
    y = np.array(labels[:X.n_cols])
    buf = io.StringIO()
    write_libsvm(X, y, buf)
    X2, y2 = parse_libsvm(buf.getvalue(), expected_features=X.n_rows)
    assert X2.shape == X.shape and X2.nnz == X.nnz
    assert X2.values.tobytes() == X.values.tobytes()
    assert np.array_equal(X2.col_indices, X.col_indices)
    assert y2.tobytes() == y.tobytes()
