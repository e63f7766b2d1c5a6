import numpy as np
import pytest

from cabcd.metrics import (MetricsRow, cond_stats, dual_objective, primal_objective,
                           relative_objective_error, relative_solution_error)
from cabcd.partition import LayoutKind, partition
from cabcd.sparse import CsrMatrix
from conftest import random_instance


def test_primal_objective_trivial(diag2):
    X, y = diag2
    assert primal_objective(X, np.zeros(2), y, 0.3) == pytest.approx(0.5 * (y @ y) / 2)
    assert primal_objective(X, np.array([1.0, 0.5]), y, 0.0) == 0.0


def test_primal_objective_brute_force():
    X, Xd, y = random_instance(6, 10, 0.5, seed=1)
    w = np.random.default_rng(2).standard_normal(6)
    lam = 0.37
    brute = 0.0
    for j in range(10):
        pred = sum(Xd[i, j] * w[i] for i in range(6))
        brute += (pred - y[j]) ** 2
    brute = brute / 20 + lam / 2 * sum(v * v for v in w)
    assert primal_objective(X, w, y, lam) == pytest.approx(brute, rel=1e-12)


def test_dual_objective():
    X, Xd, y = random_instance(6, 10, 0.5, seed=3)
    lam = 0.2
    assert dual_objective(X, np.zeros(10), y, lam) == pytest.approx(y @ y / 20)
    Z = CsrMatrix.empty(6, 10)
    assert dual_objective(Z, -y, y, lam) == 0.0
    a = np.random.default_rng(4).standard_normal(10)
    v = Xd @ a / (lam * 10)
    expect = lam / 2 * v @ v + (a + y) @ (a + y) / 20
    assert dual_objective(X, a, y, lam) == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize("kind", list(LayoutKind))
def test_objectives_invariant_under_rank_count(kind):
    X, _, y = random_instance(20, 30, 0.3, seed=5)
    rng = np.random.default_rng(6)
    w, a = rng.standard_normal(20), rng.standard_normal(30)
    f0 = primal_objective(X, w, y, 0.1)
    g0 = dual_objective(X, a, y, 0.1)
    for P in (1, 2, 4, 8):
        shards = partition(X, P, kind)
        assert primal_objective(shards, w, y, 0.1) == pytest.approx(f0, rel=1e-12)
        assert dual_objective(shards, a, y, 0.1) == pytest.approx(g0, rel=1e-12)


def test_objective_dimension_errors(diag2):
    X, y = diag2
    with pytest.raises(ValueError):
        primal_objective(X, np.zeros(3), y, 0.1)
    with pytest.raises(ValueError):
        primal_objective(X, np.zeros(2), np.ones(3), 0.1)
    with pytest.raises(ValueError):
        dual_objective(X, np.zeros(3), y, 0.1)


def test_relative_errors():
    assert relative_objective_error(2.0, 2.0) == 0.0
    assert relative_objective_error(4.0, 2.0) == 1.0
    assert relative_objective_error(1.0, 2.0) == 0.5     # magnitude, not signed
    with pytest.raises(ValueError):
        relative_objective_error(1.0, 0.0)
    w = np.array([3.0, 4.0])
    assert relative_solution_error(w, w) == 0.0
    assert relative_solution_error(np.zeros(2), w) == 1.0
    assert relative_solution_error(2 * w, w) == 1.0
    with pytest.raises(ValueError):
        relative_solution_error(w, np.zeros(2))


def test_cond_stats():
    st = cond_stats([7.0] * 5)
    assert st.min == st.q1 == st.median == st.q3 == st.max == 7.0
    assert cond_stats([5, 1, 4, 2, 3]).median == 3
    with pytest.raises(ValueError):
        cond_stats([])
    trace = np.random.default_rng(7).lognormal(size=37)
    s = np.sort(trace)
    N = len(s)
    got = cond_stats(trace)
    assert got.min == s[0] and got.max == s[-1]
    assert got.q1 == s[int(np.ceil(0.25 * N)) - 1]
    assert got.median == s[int(np.ceil(0.5 * N)) - 1]
    assert got.q3 == s[int(np.ceil(0.75 * N)) - 1]


def test_metrics_row_csv():
    r = MetricsRow(3, 0.5, 1.25, None, 0.1, 2.0, 10, 4, 2, None, 0.0123456789)
    assert MetricsRow.header() == ["iter", "epoch", "objective", "rel_obj_err", "rel_sol_err",
                                   "residual", "flops", "words", "messages", "gram_cond", "wall_s"]
    assert r.as_csv_row() == ["3", "0.5", "1.25", "", "0.1", "2.0", "10", "4", "2", "", "0.012346"]
