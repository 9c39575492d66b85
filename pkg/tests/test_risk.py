import math

import numpy as np
import pytest
from scipy import stats

from bernvine.garch import t_quantile
from bernvine.risk import (InputError, ReturnPanel, VaRForecast, empirical_quantile,
                           expected_exceedances, forecast_var, hit_sequence, ingest, portfolio_var,
                           read_table, series)
from bernvine.synthetic import (PANEL_FILE, fixture_path, simulate_returns, synthetic_prices)
from bernvine.vine import VineStructure, independence_vine, simulate


def prices_text(rows, names=("A",)):
    lines = ["date," + ",".join(names)]
    for i, row in enumerate(rows):
        lines.append(f"2020-01-{i + 1:02d}," + ",".join(str(x) for x in np.atleast_1d(row)))
    return "\n".join(lines) + "\n"


# -- ingestion -----------------------------------------------------------------

def test_ingest_examples():
    panel, rep = ingest(prices_text([100, 110]))
    assert panel.r[0, 0] == pytest.approx(math.log(1.1))
    assert rep.clean
    panel, _ = ingest(prices_text([5, 5, 5, 5]))
    assert np.array_equal(panel.r, np.zeros((3, 1)))


def test_reversed_extreme_flagged():
    _, rep = ingest(prices_text([10, 250, 10]))
    assert len(rep.reversed_extremes) == 1
    asset, d1, r1, d2, r2 = rep.reversed_extremes[0]
    assert r1 == pytest.approx(math.log(25)) and r2 == pytest.approx(-math.log(25))
    _, rep = ingest(prices_text([10, 50, 10]))
    assert rep.clean


def test_penny_prices_flagged_not_removed():
    panel, rep = ingest(prices_text([2.0, 0.5, 0.6]))
    assert panel.T == 2
    assert [p[2] for p in rep.penny_prices] == [0.5, 0.6]


def test_ingest_errors(tmp_path):
    with pytest.raises(InputError):
        ingest(prices_text([100]))
    with pytest.raises(InputError):
        ingest("date,A,B\n2020-01-01,1,2\n2020-01-02,3\n")
    with pytest.raises(InputError):
        ingest("date,A\n2020-01-02,1\n2020-01-01,2\n")
    with pytest.raises(InputError):
        ingest("date,A\n2020-01-01,1\n2020-01-02,abc\n")
    with pytest.raises(InputError):
        ingest(prices_text([1, -1]))
    with pytest.raises(InputError):
        ingest(str(tmp_path / "missing.csv"))


def test_delimiters_and_returns_kind():
    text = "date;A;B\n2020-01-01;0.01;0.02\n2020-01-02;-0.01;0.0\n"
    panel, _ = ingest(text, kind="returns")
    assert panel.assets == ("A", "B") and panel.r.shape == (2, 2)
    dates, names, values = read_table(text.replace(";", "\t"))
    assert names == ["A", "B"] and values[1, 0] == -0.01


def test_return_panel_validation():
    with pytest.raises(InputError):
        ReturnPanel(("2020-01-01",), np.array([[np.nan]]), ("A",))
    with pytest.raises(InputError):
        ReturnPanel(("2020-01-02", "2020-01-01"), np.zeros((2, 1)), ("A",))


def test_bundled_fixture():
    panel, rep = ingest(fixture_path(PANEL_FILE))
    assert panel.T == 800 and panel.d == 5 and rep.clean
    # the file is reproducible from the generator
    fresh = synthetic_prices()
    assert np.allclose(np.diff(np.log(fresh[2]), axis=0), panel.r, atol=1e-12)


# -- quantiles and hits --------------------------------------------------------

def test_degenerate_paths_give_constant_var():
    paths = np.full(5000, -0.013)
    assert all(v == -0.013 for _, _, v in portfolio_var(paths))


def test_empirical_quantile_convention():
    x = np.arange(1, 10001, dtype=float)
    assert empirical_quantile(x, 0.05) == 500.0
    assert empirical_quantile(x, 0.975) == 9750.0
    assert empirical_quantile(x[:7], 0.01) == 1.0


def test_expected_exceedances():
    assert [expected_exceedances(p, 300) for p in (0.02, 0.05, 0.10, 0.025)] == [6, 15, 30, 8]


def fc(values, level=0.05, side="long"):
    return [VaRForecast(f"d{i}", level, side, v, 1000) for i, v in enumerate(values)]


def test_hit_sequence_examples():
    f = fc([-0.02] * 5)
    assert hit_sequence(f, [0.0, 0.01, -0.01, 0.02, 0.0]).hits == 0
    h = hit_sequence(f, {"d0": 0.0, "d1": -0.05, "d2": 0.0, "d3": 0.0, "d4": 0.0})
    assert h.h.tolist() == [0, 1, 0, 0, 0] and h.alpha == 0.05
    short = hit_sequence(fc([0.02] * 3, 0.975, "short"), [0.03, 0.0, 0.01])
    assert short.h.tolist() == [1, 0, 0] and short.alpha == pytest.approx(0.025)


def test_hit_sequence_errors():
    with pytest.raises(ValueError):
        hit_sequence(fc([0.0, 0.0]), [1.0])
    with pytest.raises(ValueError):
        hit_sequence(fc([0.0]), {"other": 1.0})
    with pytest.raises(ValueError):
        hit_sequence(fc([0.0]) + fc([0.0], 0.1), [0.0, 0.0])


def test_iid_hit_rate():
    rng = np.random.default_rng(17)
    P, alpha = 2000, 0.05
    y = rng.normal(size=P)
    h = hit_sequence(fc([stats.norm.ppf(alpha)] * P), y)
    assert abs(h.hits / P - alpha) <= 2 * math.sqrt(alpha * (1 - alpha) / P)


def test_diversification():
    rng = np.random.default_rng(6)
    u = simulate(independence_vine(VineStructure("C", (0, 1, 2, 3))), 20000, rng)
    x = t_quantile(5.0, np.clip(u, 1e-12, 1 - 1e-12))
    single = empirical_quantile(x[:, 0], 0.05)
    port = x.mean(axis=1)
    assert np.allclose(port, x @ np.full(4, 0.25), atol=1e-12)
    assert single < empirical_quantile(port, 0.05) < 0


# -- short rolling forecast ----------------------------------------------------

@pytest.fixture(scope="module")
def short_run():
    r = simulate_returns(152, d=3, seed=5)
    dates = tuple(f"2021-{1 + i // 28:02d}-{1 + i % 28:02d}" for i in range(r.shape[0]))
    panel = ReturnPanel(dates, r, ("A", "B", "C"))
    return panel, forecast_var(panel, window=150, K=1000, seed=9, n_out=2)


def test_forecast_levels_are_monotone(short_run):
    _, run = short_run
    assert not run.failures
    for arm in run.forecasts:
        for date in {f.date for f in run.forecasts[arm]}:
            v = {(f.level, f.side): f.var_value for f in run.forecasts[arm] if f.date == date}
            assert v[0.02, "long"] <= v[0.05, "long"] <= v[0.10, "long"] < v[0.975, "short"]


def test_forecast_is_deterministic(short_run):
    panel, run = short_run
    again = forecast_var(panel, window=150, K=1000, seed=9, n_out=2)
    for arm in run.forecasts:
        assert [f.var_value for f in run.forecasts[arm]] == [f.var_value for f in again.forecasts[arm]]
    assert len(series(run, "bernstein", 0.05, "long")) == 2


def test_forecast_preconditions(short_run):
    panel, _ = short_run
    with pytest.raises(InputError):
        forecast_var(panel, window=500)
    with pytest.raises(ValueError):
        forecast_var(panel, window=150, K=500)
    with pytest.raises(ValueError):
        forecast_var(panel, window=150, arms=("kernel",))
