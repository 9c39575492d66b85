from collections import Counter

import numpy as np
import pytest

from bernvine.ase_study import (ARMS, AseRecord, StudyConfig, ase, format_records, format_summary,
                                instability_rate, mean_ase, random_pair_copula, random_true_vine,
                                replication_rng, run_replication, run_study, summarize)
from bernvine.families import CANDIDATE_FAMILIES, INDEPENDENCE, FamilyId, ParametricPairCopula
from bernvine.vine import VineModel, VineStructure

# mean over the 20 x 20 grid of (C_Clayton(2) - uv)^2, closed-form Clayton cdf
CLAYTON2_VS_INDEPENDENCE = 0.005299586209946623


def two_dim(c, kind="C"):
    return VineModel(VineStructure(kind, (0, 1)), [[c]])


def test_random_vine_layout(rng):
    v = random_true_vine(2, "C", rng)
    assert len(v.edges) == 1 and len(v.edges[0]) == 1
    v = random_true_vine(6, "D", rng)
    assert [len(level) for level in v.edges] == [5, 4, 3, 2, 1]
    with pytest.raises(ValueError):
        random_true_vine(1, "C", rng)


def test_family_frequencies_and_tau_range():
    rng = np.random.default_rng(77)
    draws = [random_pair_copula(rng) for _ in range(1000)]
    counts = Counter(c.family for c in draws)
    for fam in CANDIDATE_FAMILIES:
        assert abs(counts[fam] / 1000 - 1 / len(CANDIDATE_FAMILIES)) <= 0.03
    taus = np.array([abs(c.tau) for c in draws])
    assert taus.min() >= 0.1 - 1e-9 and taus.max() <= 0.7 + 1e-9
    assert all(3 <= c.nu <= 10 for c in draws if c.family is FamilyId.STUDENT_T)
    assert all(c.tau < 0 for c in draws if c.family in (FamilyId.CLAYTON_90, FamilyId.GUMBEL_90))


def test_tau_half_clayton_is_theta_two():
    from bernvine.families import tau_to_parameter
    assert tau_to_parameter(FamilyId.CLAYTON, 0.5) == pytest.approx(2.0)


def test_ase_examples(rng):
    v = random_true_vine(5, "C", rng)
    assert ase(v, v) == 0.0
    assert ase(two_dim(INDEPENDENCE), two_dim(ParametricPairCopula(FamilyId.GAUSSIAN, 0.0))) \
        == pytest.approx(0.0, abs=1e-14)
    assert ase(two_dim(ParametricPairCopula(FamilyId.CLAYTON, 2.0)), two_dim(INDEPENDENCE)) \
        == pytest.approx(CLAYTON2_VS_INDEPENDENCE, rel=1e-12)


def test_ase_matches_edges_across_orientation():
    c = ParametricPairCopula(FamilyId.CLAYTON_90, -1.5)
    swapped = VineModel(VineStructure("C", (1, 0)), [[c]])
    # the swapped vine's edge copula sees (u1, u0); its transpose is compared
    assert ase(two_dim(c), swapped) > 0
    g = ParametricPairCopula(FamilyId.GUMBEL, 1.7)
    assert ase(two_dim(g), VineModel(VineStructure("C", (1, 0)), [[g]])) == pytest.approx(0.0, abs=1e-14)
    # only the {0, 2} edge is shared between these structures
    assert np.isfinite(ase(VineModel(VineStructure("C", (0, 1, 2)), [[g, g], [g]]),
                           VineModel(VineStructure("D", (1, 2, 0)), [[g, g], [g]])))


def test_config_validation():
    with pytest.raises(ValueError):
        StudyConfig(replications=0)
    with pytest.raises(ValueError):
        StudyConfig(ase_grid=(5, 5))
    with pytest.raises(ValueError):
        StudyConfig(kinds=("R",))
    assert StudyConfig(kinds=("c",)).kinds == ("C",)


def test_replication_streams_are_independent_of_order():
    a = replication_rng(1, 3, "C", 200, 4).random(3)
    b = replication_rng(1, 3, "C", 200, 4).random(3)
    c = replication_rng(1, 3, "D", 200, 4).random(3)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_replication_records():
    cfg = StudyConfig(dims=(3,), kinds=("C",), sample_sizes=(200,), replications=1, seed=3)
    recs = run_replication(cfg, 3, "C", 200, 0)
    assert [r.arm for r in recs] == list(ARMS)
    for r in recs:
        assert np.isfinite(r.ase) and 0 <= r.ase < 0.05 and not r.unstable


@pytest.fixture(scope="module")
def small_study():
    cfg = StudyConfig(dims=(3, 4), kinds=("C", "D"), sample_sizes=(200,), replications=3, seed=11)
    return cfg, run_study(cfg)


def test_study_is_seed_deterministic(small_study):
    cfg, recs = small_study
    assert len(recs) == 2 * 2 * 3 * 2
    again = run_study(StudyConfig(dims=(3,), kinds=("C", "D"), sample_sizes=(200,), replications=3,
                                  seed=11))
    assert again == [r for r in recs if r.dim == 3]


def test_worker_count_does_not_change_results(small_study):
    cfg, recs = small_study
    assert run_study(cfg, workers=2) == recs


def test_summaries(small_study):
    cfg, recs = small_study
    rows = summarize(recs)
    assert len(rows) == 2 * 2 * 2
    for r in rows:
        assert r.replications == 3 and 0 <= r.instability_pct <= 100
    text = format_summary(rows, cfg.seed)
    assert text.startswith("# seed=11\ndim,kind,n,arm,ase_e3,")
    dump = format_records(recs, cfg.seed, delimiter=";")
    assert len(dump.splitlines()) == len(recs) + 2
    assert mean_ase(recs, 3, "Bernstein") > 0
    assert instability_rate(recs, 3, "Bernstein") == 0.0


def test_summary_excludes_unstable():
    recs = [AseRecord(3, "C", 200, "AIC", 0, 0.002, False),
            AseRecord(3, "C", 200, "AIC", 1, 5.0, True, "ASE above 1.0")]
    (row,) = summarize(recs)
    assert row.ase_e3 == pytest.approx(2.0) and row.instability_pct == 50.0 and row.stable == 1
