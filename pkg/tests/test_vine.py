import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bernvine.ase_study import ase, random_true_vine
from bernvine.bernstein import BernsteinCopula
from bernvine.empirical import PseudoSample, kendall_matrix, pseudo_observations
from bernvine.families import INDEPENDENCE, FamilyId, ParametricPairCopula, tau_to_parameter
from bernvine.synthetic import fixture_vine
from bernvine.vine import (VineModel, VineStructure, _best_path, dumps, fit_sequential_bernstein,
                           fit_sequential_parametric, independence_vine, inverse_rosenblatt,
                           loads, log_density, path_weight, rosenblatt, select_order, simulate)

F = FamilyId


def pc(family, tau, nu=None):
    return ParametricPairCopula(family, tau_to_parameter(family, tau), nu)


def tau_of(x):
    return kendall_matrix(PseudoSample(pseudo_observations(x).u))


C3 = VineModel(VineStructure("C", (0, 1, 2)),
               [[pc(F.CLAYTON, 0.5), pc(F.GUMBEL, 0.4)], [pc(F.STUDENT_T, 0.3, 5.0)]])


# -- log density ---------------------------------------------------------------

def test_independence_vine_log_density_is_zero(rng):
    for kind in "CD":
        v = independence_vine(VineStructure(kind, (2, 0, 3, 1)))
        assert np.allclose(log_density(v, rng.random((50, 4))), 0.0)


def test_cvine_d3_hand_oracle(rng):
    u = rng.uniform(0.02, 0.98, size=(200, 3))
    c12, c13 = C3.edge(0, 0), C3.edge(0, 1)
    c23_1 = C3.edge(1, 0)
    a = c12.h(u[:, 1], u[:, 0])
    b = c13.h(u[:, 2], u[:, 0])
    ref = np.log(c12.density(u[:, 0], u[:, 1]) * c13.density(u[:, 0], u[:, 2]) * c23_1.density(a, b))
    assert np.abs(log_density(C3, u) - ref).max() <= 1e-10


def test_dvine_d3_hand_oracle(rng):
    e01, e12, e = pc(F.GUMBEL, 0.4), pc(F.CLAYTON_90, -0.3), pc(F.GAUSSIAN, -0.2)
    v = VineModel(VineStructure("D", (0, 1, 2)), [[e01, e12], [e]])
    u = rng.uniform(0.02, 0.98, size=(200, 3))
    a = e01.h_rev(u[:, 0], u[:, 1])     # F(u0 | u1)
    b = e12.h(u[:, 2], u[:, 1])         # F(u2 | u1)
    ref = (e01.log_density(u[:, 0], u[:, 1]) + e12.log_density(u[:, 1], u[:, 2])
           + e.log_density(a, b))
    assert np.abs(log_density(v, u) - ref).max() <= 1e-10


def test_two_dimensional_vine_is_its_edge(rng):
    c = pc(F.SURVIVAL_CLAYTON, 0.35)
    u = rng.random((40, 2))
    for kind in "CD":
        v = VineModel(VineStructure(kind, (0, 1)), [[c]])
        assert np.allclose(log_density(v, u), c.log_density(u[:, 0], u[:, 1]), atol=1e-12)


def test_c_and_d_coincide_at_three(rng):
    # exchangeable edges, so argument order of the relabelled first tree is irrelevant
    e01, e12, e = pc(F.GAUSSIAN, 0.5), pc(F.CLAYTON, 0.3), pc(F.GUMBEL, 0.25)
    dv = VineModel(VineStructure("D", (0, 1, 2)), [[e01, e12], [e]])
    cv = VineModel(VineStructure("C", (1, 0, 2)), [[e01, e12], [e]])
    u = rng.uniform(0.01, 0.99, size=(300, 3))
    assert np.abs(log_density(dv, u) - log_density(cv, u)).max() <= 1e-10


def test_conditional_cdf_recursion_matches_edge(rng):
    u = rng.uniform(0.01, 0.99, size=(100, 3))
    w = rosenblatt(C3, u)
    assert np.abs(w[:, 1] - C3.edge(0, 0).h(u[:, 1], u[:, 0])).max() <= 1e-12
    assert np.allclose(w[:, 0], u[:, 0])


@pytest.mark.parametrize("kind", "CD")
def test_rosenblatt_inverse_round_trip(kind, rng):
    v = random_true_vine(5, kind, rng)
    w = rng.uniform(0.01, 0.99, size=(200, 5))
    x = inverse_rosenblatt(v, w)
    assert np.abs(rosenblatt(v, x) - w).max() <= 1e-7


# -- simulation ----------------------------------------------------------------

def test_independence_vine_simulation_returns_uniforms():
    v = independence_vine(VineStructure("C", (0, 1, 2)))
    a = simulate(v, 100, np.random.default_rng(3))
    b = np.random.default_rng(3).uniform(size=(100, 3))
    assert np.allclose(a, b, atol=1e-12)
    assert simulate(v, 0, np.random.default_rng(3)).shape == (0, 3)


def test_simulated_unconditional_tau(rng):
    x = simulate(C3, 5000, rng)
    t = tau_of(x)
    assert t[0, 1] == pytest.approx(0.5, abs=0.05)
    assert t[0, 2] == pytest.approx(0.4, abs=0.05)


def test_log_density_finite_on_simulated_samples():
    rng = np.random.default_rng(11)
    for i in range(10):
        d = 3 + i % 5
        v = random_true_vine(d, "CD"[i % 2], rng)
        assert np.isfinite(log_density(v, simulate(v, 500, rng))).all()


# -- fitting -------------------------------------------------------------------

def test_parametric_fit_on_independence_data(rng):
    u = pseudo_observations(rng.random((500, 3)))
    model, report = fit_sequential_parametric(u, VineStructure("C", (0, 1, 2)))
    assert all(abs(c.tau) < 0.1 for level in model.edges for c in level)
    assert report.selected and len(report.selected) == 3


def test_parametric_fit_rejects_small_samples(rng):
    with pytest.raises(ValueError):
        fit_sequential_parametric(rng.random((20, 3)), VineStructure("C", (0, 1, 2)))
    with pytest.raises(ValueError):
        fit_sequential_bernstein(rng.random((30, 3)), VineStructure("C", (0, 1, 2)), 8)


@pytest.mark.slow
def test_parametric_fit_recovers_families():
    truth = VineModel(VineStructure("C", (0, 1, 2)),
                      [[pc(F.CLAYTON, 0.5), pc(F.GUMBEL, 0.45)], [pc(F.CLAYTON_90, -0.35)]])
    rng = np.random.default_rng(2024)
    good = 0
    for _ in range(100):
        u = pseudo_observations(simulate(truth, 500, rng))
        model, _ = fit_sequential_parametric(u, truth.structure)
        hits = sum(model.edge(t, k).family is truth.edge(t, k).family
                   for t, k in truth.structure.edge_index())
        good += hits >= 2
    assert good >= 70


def test_bernstein_fit_on_independence_data(rng):
    u = pseudo_observations(rng.random((1000, 3)))
    model = fit_sequential_bernstein(u, VineStructure("D", (0, 1, 2)), 8)
    for level in model.edges:
        for c in level:
            assert np.abs(c.p - 1 / 64).max() < 2e-2


def test_bernstein_fit_is_deterministic(rng):
    u = pseudo_observations(simulate(C3, 300, rng))
    a = fit_sequential_bernstein(u, C3.structure)
    b = fit_sequential_bernstein(u, C3.structure)
    assert dumps(a) == dumps(b)


def test_bernstein_vine_ase_d5():
    rng = np.random.default_rng(5)
    truth = random_true_vine(5, "C", rng)
    u = pseudo_observations(simulate(truth, 500, rng))
    err = ase(truth, fit_sequential_bernstein(u, truth.structure))
    assert np.isfinite(err) and err < 0.02


def test_simulate_fit_simulate_tau_agreement():
    rng = np.random.default_rng(8)
    truth = fixture_vine(4)
    x1 = simulate(truth, 2000, rng)
    # the cube-root default (m=13) attenuates tau by up to 0.1; a finer grid is needed here
    model = fit_sequential_bernstein(pseudo_observations(x1), truth.structure, 25)
    x2 = simulate(model, 2000, rng)
    assert np.abs(tau_of(x1) - tau_of(x2)).max() <= 0.07


# -- order selection -----------------------------------------------------------

def test_select_order_examples(rng):
    assert select_order(rng.random((50, 2)), "C").order == (0, 1)
    tau = np.array([[1, 0.6, 0.5], [0.6, 1, 0.1], [0.5, 0.1, 1]])
    assert select_order(None, "C", tau=tau).order[0] == 0
    d = select_order(None, "D", tau=tau)
    assert d.order[1] == 0  # the strong variable sits in the middle of the path


def test_select_order_permutation_invariance():
    rng = np.random.default_rng(4)
    x = simulate(fixture_vine(5), 800, rng)
    perm = np.array([3, 0, 4, 1, 2])
    for kind in "CD":
        base = select_order(pseudo_observations(x), kind).order
        relab = select_order(pseudo_observations(x[:, perm]), kind).order
        mapped = tuple(int(perm[i]) for i in relab)
        if kind == "C":
            # the last two roots always tie; their order only swaps the final edge's arguments
            assert mapped[:-2] == base[:-2] and set(mapped[-2:]) == set(base[-2:])
        else:
            assert mapped in (base, base[::-1])


@settings(max_examples=25)
@given(st.integers(3, 7), st.integers(0, 2**31 - 1))
def test_dynamic_programme_path_is_optimal(d, seed):
    w = np.random.default_rng(seed).random((d, d))
    w = (w + w.T) / 2
    np.fill_diagonal(w, 0)
    best = max(path_weight(w, p) for p in itertools.permutations(range(d)))
    assert path_weight(w, _best_path(w)) == pytest.approx(best, abs=1e-12)


# -- serialization -------------------------------------------------------------

def test_serialization_round_trip(rng):
    u = pseudo_observations(simulate(C3, 300, rng))
    bern = fit_sequential_bernstein(u, C3.structure, 6)
    for model in (C3, bern, random_true_vine(6, "D", rng)):
        text = dumps(model)
        back = loads(text)
        assert dumps(back) == text
        x = rng.uniform(0.05, 0.95, size=(20, model.d))
        assert np.array_equal(log_density(back, x), log_density(model, x))
    assert isinstance(loads(dumps(bern)).edge(0, 0), BernsteinCopula)


@pytest.mark.parametrize("text", ["", "garbage 1\n", "bernvine-vine 1\nstructure C 3 0 1 2\n",
                                  "bernvine-vine 1\nstructure C 2 0 1\nedge 0 0 bernstein 2 1 0 0\n",
                                  "bernvine-vine 9\nstructure C 2 0 1\n"])
def test_loads_rejects_malformed(text):
    with pytest.raises(ValueError):
        loads(text)


def test_structure_validation():
    with pytest.raises(ValueError):
        VineStructure("R", (0, 1))
    with pytest.raises(ValueError):
        VineStructure("C", (0, 0, 1))
    with pytest.raises(ValueError):
        VineModel(VineStructure("C", (0, 1, 2)), [[INDEPENDENCE], [INDEPENDENCE]])
    assert VineStructure("D", (2, 0, 1)).edge_label(1, 0) == "3,2|1"
