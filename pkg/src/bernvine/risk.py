"""Return panels, data screening and Monte-Carlo portfolio VaR forecasts."""

import csv
import datetime as dt
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import garch
from .empirical import pseudo_observations
from .vine import (VineEvaluationError, fit_sequential_bernstein, fit_sequential_parametric,
                   select_order, simulate)

LONG_LEVELS = (0.02, 0.05, 0.10)
SHORT_LEVELS = (0.975,)
ARMS = ("bernstein", "parametric")
EXTREME_LOG_RETURN = 3.0
REVERSAL_WINDOW = 21
PENNY = 1.0


class InputError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class ReturnPanel:
    """Aligned log returns, one row per trading day."""

    dates: tuple
    r: np.ndarray
    assets: tuple

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        if r.ndim != 2 or r.shape != (len(self.dates), len(self.assets)):
            raise InputError("return matrix does not match dates and assets")
        if not np.all(np.isfinite(r)):
            raise InputError("returns contain missing or non-finite values")
        if any(b <= a for a, b in zip(self.dates[:-1], self.dates[1:])):
            raise InputError("dates must be strictly increasing")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "assets", tuple(self.assets))

    @property
    def T(self):
        return self.r.shape[0]

    @property
    def d(self):
        return self.r.shape[1]


@dataclass
class ScreeningReport:
    """Warnings raised by the screening rules; nothing is removed."""

    penny_prices: list = field(default_factory=list)
    reversed_extremes: list = field(default_factory=list)

    @property
    def clean(self):
        return not self.penny_prices and not self.reversed_extremes

    def lines(self):
        out = [f"penny_price date={d} asset={a} price={p!r}" for d, a, p in self.penny_prices]
        out += [f"reversed_extreme asset={a} date={d1} return={r1!r} reversal_date={d2} reversal_return={r2!r}"
                for a, d1, r1, d2, r2 in self.reversed_extremes]
        return out


def _sniff_delimiter(first_line):
    for cand in (",", ";", "\t", "|"):
        if cand in first_line:
            return cand
    return None


def read_table(source, delimiter=None):
    """Parse a delimited table with a header row and ISO dates in column one.

    ``source`` may be a path or the text itself.

    Returns
    -------
    dates : list of datetime.date
    names : list of str
    values : ndarray, shape (T, d)
    """
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, newline="") as fh:
            text = fh.read()
    elif isinstance(source, str) and ("\n" in source or _sniff_delimiter(source)):
        text = source
    else:
        raise InputError(f"cannot read input {source!r}")
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if len(lines) < 2:
        raise InputError("need a header row and at least one data row")
    delimiter = delimiter or _sniff_delimiter(lines[0]) or ","
    rows = list(csv.reader(io.StringIO("\n".join(lines)), delimiter=delimiter))
    header = [h.strip() for h in rows[0]]
    names = header[1:]
    if not names:
        raise InputError("header has no asset columns")
    dates, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InputError(f"row {lineno}: expected {len(header)} fields, found {len(row)}")
        try:
            dates.append(dt.date.fromisoformat(row[0].strip()))
            values.append([float(x) for x in row[1:]])
        except ValueError as exc:
            raise InputError(f"row {lineno}: {exc}") from None
    values = np.array(values)
    if not np.all(np.isfinite(values)):
        raise InputError("table contains missing or non-finite values")
    return dates, names, values


def ingest(source, kind="prices", delimiter=None):
    """Read prices (or returns) into a :class:`ReturnPanel` with a screening report.

    Parameters
    ----------
    source : path or str
    kind : {'prices', 'returns'}

    Returns
    -------
    panel : ReturnPanel
    report : ScreeningReport
    """
    dates, names, values = read_table(source, delimiter)
    if any(b <= a for a, b in zip(dates[:-1], dates[1:])):
        raise InputError("dates must be strictly increasing")
    report = ScreeningReport()
    if kind == "prices":
        if len(dates) < 2:
            raise InputError("need at least two price rows")
        if np.any(values <= 0):
            raise InputError("prices must be positive")
        for t, j in zip(*np.nonzero(values < PENNY)):
            report.penny_prices.append((dates[t].isoformat(), names[j], float(values[t, j])))
        r = np.diff(np.log(values), axis=0)
        rdates = dates[1:]
    elif kind == "returns":
        r, rdates = values, dates
    else:
        raise ValueError(f"unknown input kind {kind!r}")
    report.reversed_extremes = _reversed_extremes(r, rdates, names)
    panel = ReturnPanel(tuple(d.isoformat() for d in rdates), r, tuple(names))
    return panel, report


def _reversed_extremes(r, dates, names):
    flags = []
    T = r.shape[0]
    for j in range(r.shape[1]):
        for t in np.nonzero(np.abs(r[:, j]) > EXTREME_LOG_RETURN)[0]:
            for s in range(t + 1, min(T, t + 1 + REVERSAL_WINDOW)):
                if abs(r[s, j]) > EXTREME_LOG_RETURN and np.sign(r[s, j]) != np.sign(r[t, j]):
                    flags.append((names[j], dates[t].isoformat(), float(r[t, j]),
                                  dates[s].isoformat(), float(r[s, j])))
                    break
    return flags


def write_panel(path, dates, names, values, delimiter=",", header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(["date", *names])
        for d, row in zip(dates, values):
            w.writerow([d, *("%.17g" % x for x in row)])


# -- forecasting -------------------------------------------------------------


@dataclass(frozen=True)
class VaRForecast:
    date: str
    level: float
    side: str
    var_value: float
    K: int
    arm: str = ""

    @property
    def exceed_prob(self):
        """Nominal probability of an exceedance."""
        return self.level if self.side == "long" else 1.0 - self.level


@dataclass
class ForecastRun:
    """All forecasts of one pipeline run, keyed by arm."""

    forecasts: dict
    realized: dict
    failures: list = field(default_factory=list)
    n_days: int = 0

    def failure_rate(self):
        return len(self.failures) / self.n_days if self.n_days else 0.0


def empirical_quantile(x, level):
    """Order statistic at index ceil(level * K) (1-based)."""
    x = np.sort(np.asarray(x, dtype=float))
    k = max(1, math.ceil(level * x.size - 1e-9))
    return float(x[k - 1])


def portfolio_var(paths, long_levels=LONG_LEVELS, short_levels=SHORT_LEVELS):
    """VaR values (level, side, value) from simulated portfolio returns."""
    out = [(a, "long", empirical_quantile(paths, a)) for a in long_levels]
    out += [(a, "short", empirical_quantile(paths, a)) for a in short_levels]
    return out


def _day_seed(seed, day):
    return np.random.default_rng([int(seed), int(day)])


def forecast_var(panel, window=500, arms=ARMS, K=10_000, seed=0, kind="C",
                 long_levels=LONG_LEVELS, short_levels=SHORT_LEVELS, m=None,
                 weights=None, refit_every=1, n_out=None, variance_input="demeaned",
                 progress=None):
    """Rolling one-day-ahead Monte-Carlo portfolio VaR.

    For each out-of-sample day the d GARCH margins are fitted on the
    preceding ``window`` returns, the pseudo-observations of their
    standardized residuals drive a vine fit (order re-selected each
    window), and ``K`` simulated portfolio returns give every VaR level.

    Parameters
    ----------
    panel : ReturnPanel
    arms : sequence of {'bernstein', 'parametric'}
        Pair-copula modes; margins are shared between them.
    refit_every : int
        Re-estimate margins and vines every this many days; in between
        only the volatility forecasts are rolled forward.
    n_out : int, optional
        Number of out-of-sample days, default ``T - window``.

    Returns
    -------
    ForecastRun
    """
    T, d = panel.T, panel.d
    if T < window + 1:
        raise InputError(f"need at least window+1={window + 1} returns, got {T}")
    if K < 1000:
        raise ValueError("K must be at least 1000")
    for arm in arms:
        if arm not in ARMS:
            raise ValueError(f"unknown arm {arm!r}")
    w = np.full(d, 1.0 / d) if weights is None else np.asarray(weights, dtype=float)
    days = range(window, T if n_out is None else min(T, window + n_out))
    run = ForecastRun({a: [] for a in arms}, {}, [], len(days))
    margins, vines, last_fit = None, {}, None
    for count, t in enumerate(days):
        date = panel.dates[t]
        win = panel.r[t - window:t]
        run.realized[date] = float(panel.r[t] @ w)
        try:
            if last_fit is None or count - last_fit >= refit_every or margins is None:
                prev = margins
                margins = [garch.fit_qml(win[:, j], variance_input,
                                         start=prev[j] if prev else None) for j in range(d)]
                z = np.column_stack([garch.standardized_residuals(g, win[:, j])
                                     for j, g in enumerate(margins)])
                u = pseudo_observations(z)
                structure = select_order(u, kind)
                vines = {}
                for arm in arms:
                    if arm == "bernstein":
                        vines[arm] = fit_sequential_bernstein(u, structure, m)
                    else:
                        model, report = fit_sequential_parametric(u, structure)
                        if model is None:
                            raise VineEvaluationError("; ".join(report.reasons))
                        vines[arm] = model
                last_fit = count
            fc = [garch.forecast_one_step(g, win[:, j]) for j, g in enumerate(margins)]
            mu_hat = np.array([f[0] for f in fc])
            sig_hat = np.array([f[1] for f in fc])
            for arm in arms:
                rng = _day_seed(seed, t)
                cu = simulate(vines[arm], K, rng)
                cu = np.clip(cu, 1e-12, 1.0 - 1e-12)
                sims = np.column_stack([garch.t_quantile(g.nu, cu[:, j]) for j, g in enumerate(margins)])
                paths = (mu_hat + sig_hat * sims) @ w
                for level, side, val in portfolio_var(paths, long_levels, short_levels):
                    run.forecasts[arm].append(VaRForecast(date, level, side, val, K, arm))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            run.failures.append((date, f"{type(exc).__name__}: {exc}"))
            for arm in arms:
                run.forecasts[arm] = [f for f in run.forecasts[arm] if f.date != date]
        if progress:
            progress(count + 1, len(days))
    return run


@dataclass(frozen=True)
class HitSequence:
    """Binary exceedance indicators at a nominal exceedance probability."""

    h: np.ndarray
    alpha: float
    dates: tuple = ()

    def __post_init__(self):
        h = np.asarray(self.h)
        if h.ndim != 1 or not np.all((h == 0) | (h == 1)):
            raise ValueError("hit sequence must be a 1-d array of 0/1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        h = h.astype(np.int8)
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def P(self):
        return self.h.size

    @property
    def hits(self):
        return int(self.h.sum())


def hit_sequence(forecasts, realized):
    """Exceedance indicators for one (level, side) forecast series.

    ``realized`` maps dates to portfolio returns (or is a sequence aligned
    with ``forecasts``).
    """
    forecasts = list(forecasts)
    if not forecasts:
        raise ValueError("no forecasts")
    keys = {(f.level, f.side) for f in forecasts}
    if len(keys) != 1:
        raise ValueError("forecasts must share a single level and side")
    if isinstance(realized, dict):
        try:
            y = np.array([realized[f.date] for f in forecasts])
        except KeyError as exc:
            raise ValueError(f"no realized return for date {exc}") from None
    else:
        y = np.asarray(realized, dtype=float)
        if y.size != len(forecasts):
            raise ValueError("realized returns are not aligned with forecasts")
    v = np.array([f.var_value for f in forecasts])
    side = forecasts[0].side
    h = (y < v) if side == "long" else (y > v)
    return HitSequence(h.astype(np.int8), forecasts[0].exceed_prob, tuple(f.date for f in forecasts))


def series(run, arm, level, side):
    return [f for f in run.forecasts[arm] if f.level == level and f.side == side]


def expected_exceedances(p, P):
    """Nominal exceedance count, halves rounded up."""
    return int(math.floor(p * P + 0.5 + 1e-9))
