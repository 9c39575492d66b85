import numpy as np
import pytest
from hypothesis import given, strategies as st

from bernvine.empirical import ContingencyTable
from bernvine.projection import (clipped_lagrange, lagrange_project, margin_constraints,
                                 qp_project)
from oracles import qp_brute_force


def random_table(rng, m, conc=0.3):
    return rng.dirichlet(np.full(m * m, conc)).reshape(m, m)


def kkt_residual(a, res):
    m = a.shape[0]
    N, _ = margin_constraints(m)
    act = list(res.active)
    A = np.hstack([N, np.eye(m * m)[:, act]])
    g = 2 * (res.x - a).ravel()
    lam = np.linalg.lstsq(A, g, rcond=None)[0]
    return np.abs(A @ lam - g).max(), lam[N.shape[1]:]


def test_lagrange_examples():
    u = np.full((3, 3), 1 / 9)
    assert np.allclose(lagrange_project(u), u)
    assert np.allclose(lagrange_project(np.array([[1.0, 0], [0, 0]])), [[0.5, 0], [0, 0.5]])
    a = np.array([[0.5, 0], [0, 0.5]])
    assert np.allclose(lagrange_project(a), a)


def test_qp_examples():
    u = np.full((4, 4), 1 / 16)
    r = qp_project(u)
    assert np.allclose(r.x, u) and r.objective == pytest.approx(0.0, abs=1e-20)
    r = qp_project(np.array([[1.0, 0], [0, 0]]))
    assert np.allclose(r.x, [[0.5, 0], [0, 0.5]], atol=1e-12)
    assert r.objective == pytest.approx(0.5, abs=1e-12)
    assert qp_project(ContingencyTable(u)).objective == pytest.approx(0.0, abs=1e-20)


def test_corner_mass_against_brute_force():
    a = np.zeros((3, 3))
    a[0, 0] = 1.0
    ref, xref = qp_brute_force(a)
    r = qp_project(a)
    assert r.objective == pytest.approx(ref, abs=1e-8)
    assert np.allclose(r.x, xref, atol=1e-8)


def test_m3_random_against_brute_force(rng):
    for _ in range(15):
        a = random_table(rng, 3, 0.5)
        ref, _ = qp_brute_force(a)
        assert qp_project(a).objective == pytest.approx(ref, abs=1e-8)


@given(st.integers(2, 10), st.integers(0, 2**31 - 1), st.sampled_from([0.1, 0.5, 2.0]))
def test_qp_feasibility_kkt_and_optimality(m, seed, conc):
    rng = np.random.default_rng(seed)
    a = random_table(rng, m, conc)
    r = qp_project(a)
    x = r.x
    assert np.abs(x.sum(0) - 1 / m).max() <= 1e-9
    assert np.abs(x.sum(1) - 1 / m).max() <= 1e-9
    assert x.min() >= -1e-12
    res, mult = kkt_residual(a, r)
    assert res <= 1e-7
    # bound multipliers of x >= 0 have the sign of the objective gradient
    assert (mult >= -1e-9).all()
    L = clipped_lagrange(a)
    assert r.objective <= np.sum((L - a) ** 2) * (1 + 1e-9)


@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
def test_feasible_lagrange_is_optimal(m, seed):
    rng = np.random.default_rng(seed)
    a = random_table(rng, m, 20.0)  # near-uniform tables keep the Lagrange point nonnegative
    L = lagrange_project(a)
    if L.min() >= 0:
        assert np.allclose(qp_project(a).x, L, atol=1e-9)


@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
def test_idempotent(m, seed):
    a = random_table(np.random.default_rng(seed), m)
    x = qp_project(a).x
    x2 = qp_project(x)
    assert np.allclose(x2.x, x, atol=1e-12)
    assert x2.objective <= 1e-20


def test_lagrange_margins_even_when_negative(rng):
    a = random_table(rng, 6, 0.1)
    L = lagrange_project(a)
    assert np.allclose(L.sum(0), 1 / 6) and np.allclose(L.sum(1), 1 / 6)
