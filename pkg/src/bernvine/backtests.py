"""VaR backtests: conditional coverage and duration-based tests.

All statistics are computed by batch functions over a matrix of hit
sequences, so the observed statistic and its Monte-Carlo null
distribution come from the same code path. Null distributions simulate
Bernoulli(alpha) sequences unconditionally and are cached per
``(test, P, alpha, N, seed)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

N_SIM = 9999
TESTS = ("conditional_coverage", "weibull_duration", "eacd_duration")
MIN_INTERIOR = {"weibull_duration": 2, "eacd_duration": 3}
_B_RANGE = (0.02, 50.0)
_GAMMA_RANGE = (1e-5, 1e2)
FOOTER = ("p-values: Monte-Carlo, unconditional simulation of Bernoulli(alpha) hit "
          "sequences; p = (1 + #{sim >= obs}) / (N + 1)")


@dataclass(frozen=True)
class DurationSeries:
    """Spells between hits.

    ``interior`` are the uncensored durations between consecutive hits;
    ``leading`` runs from the sample start to the first hit and
    ``trailing`` from the last hit to the end (both censored, ``None``
    when empty). An all-zero sequence has a single censored spell of
    length P stored as ``leading``.
    """

    interior: np.ndarray
    leading: int | None
    trailing: int | None
    P: int
    alpha: float | None = None


@dataclass
class TestResult:
    statistic: float
    p_value: float
    n_sim: int
    details: dict = field(default_factory=dict)

    @property
    def applicable(self):
        return np.isfinite(self.statistic)


def _hits(h):
    arr = getattr(h, "h", h)
    arr = np.asarray(arr)
    if arr.ndim != 1:
        raise ValueError("hit sequence must be 1-d")
    return arr.astype(bool)


def _alpha(h, alpha):
    a = getattr(h, "alpha", None) if alpha is None else alpha
    if a is None:
        raise ValueError("nominal level alpha required")
    return float(a)


def _xlogy(x, y):
    return special.xlogy(x, y)


# -- conditional coverage ----------------------------------------------------


def _lr_uc_batch(H, alpha):
    P = H.shape[1]
    p1 = H.sum(axis=1).astype(float)
    p0 = P - p1
    pi = p1 / P
    ll_hat = _xlogy(p0, 1.0 - pi) + _xlogy(p1, pi)
    ll_0 = p0 * math.log1p(-alpha) + p1 * math.log(alpha)
    return np.maximum(2.0 * (ll_hat - ll_0), 0.0)


def _lr_ind_batch(H):
    a, b = H[:, :-1], H[:, 1:]
    n01 = np.sum(~a & b, axis=1).astype(float)
    n00 = np.sum(~a & ~b, axis=1).astype(float)
    n11 = np.sum(a & b, axis=1).astype(float)
    n10 = np.sum(a & ~b, axis=1).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        p01 = np.where(n00 + n01 > 0, n01 / (n00 + n01), 0.0)
        p11 = np.where(n10 + n11 > 0, n11 / (n10 + n11), 0.0)
    p2 = (n01 + n11) / np.maximum(n00 + n01 + n10 + n11, 1.0)
    ll_markov = (_xlogy(n00, 1.0 - p01) + _xlogy(n01, p01)
                 + _xlogy(n10, 1.0 - p11) + _xlogy(n11, p11))
    ll_iid = _xlogy(n00 + n10, 1.0 - p2) + _xlogy(n01 + n11, p2)
    return np.maximum(2.0 * (ll_markov - ll_iid), 0.0)


def _lr_cc_batch(H, alpha):
    return _lr_uc_batch(H, alpha) + _lr_ind_batch(H)


def lr_uc_statistic(h, alpha=None):
    """``2 (lnL(P1/P) - lnL(alpha))`` for a single hit sequence."""
    return float(_lr_uc_batch(_hits(h)[None, :], _alpha(h, alpha))[0])


def lr_ind_statistic(h):
    """Markov independence LR of a single hit sequence."""
    hh = _hits(h)
    if hh.size < 2:
        raise ValueError("independence test needs P >= 2")
    return float(_lr_ind_batch(hh[None, :])[0])


# -- durations ---------------------------------------------------------------


def durations(h, alpha=None):
    """Durations between hits, with censored leading and trailing spells."""
    hh = _hits(h)
    P = hh.size
    a = getattr(h, "alpha", alpha)
    t = np.nonzero(hh)[0] + 1
    if t.size == 0:
        return DurationSeries(np.empty(0, dtype=int), P if P else None, None, P, a)
    trailing = P - int(t[-1])
    return DurationSeries(np.diff(t), int(t[0]), trailing if trailing > 0 else None, P, a)


def _spells_batch(H):
    """Padded interior durations plus leading/trailing spells per row."""
    N, P = H.shape
    rows, cols = np.nonzero(H)
    counts = np.bincount(rows, minlength=N)
    # at least one (masked) interior column so downstream indexing never sees width 0
    width = max(int(counts.max()) if N else 0, 2)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    pos = np.arange(rows.size) - starts[rows]
    times = np.zeros((N, width))
    times[rows, pos] = cols + 1.0
    k = np.arange(width - 1)[None, :]
    interior = np.diff(times, axis=1)
    imask = k < (counts[:, None] - 1)
    interior = np.where(imask, interior, 0.0)
    has = counts > 0
    lead = np.where(has, times[:, 0], P)
    last = times[np.arange(N), np.maximum(counts - 1, 0)]
    trail = np.where(has, P - last, 0.0)
    return interior, imask, lead.astype(float), trail, counts


def _grid_then_golden(f, lo, hi, n_rows, n_grid=41, n_golden=40):
    """Row-wise maximization of ``f(x)`` (x of shape (n_rows,)) over log-space."""
    grid = np.linspace(math.log(lo), math.log(hi), n_grid)
    vals = np.stack([f(np.full(n_rows, math.exp(g))) for g in grid], axis=1)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    best = np.argmax(vals, axis=1)
    a = grid[np.maximum(best - 1, 0)]
    b = grid[np.minimum(best + 1, n_grid - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    for _ in range(n_golden):
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        left = f(np.exp(c)) > f(np.exp(d))
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    x = 0.5 * (a + b)
    fx = f(np.exp(x))
    gbest = vals[np.arange(n_rows), best]
    use_grid = gbest > fx
    return np.where(use_grid, np.exp(grid[best]), np.exp(x)), np.where(use_grid, gbest, fx)


def _weibull_batch(H, with_estimates=False):
    interior, imask, lead, trail, counts = _spells_batch(H)
    n = (counts - 1).astype(float)
    ok = n >= MIN_INTERIOR["weibull_duration"]
    nn = np.where(ok, n, 1.0)
    logd = np.where(imask, np.log(np.where(imask, interior, 1.0)), 0.0)
    sum_log = logd.sum(axis=1)
    log_lead = np.log(np.maximum(lead, 1.0))
    has_trail = trail > 0
    log_trail = np.log(np.where(has_trail, trail, 1.0))

    def profile(b):
        bb = b[:, None]
        s = (np.where(imask, np.exp(bb * logd), 0.0).sum(axis=1)
             + np.exp(b * log_lead) + np.where(has_trail, np.exp(b * log_trail), 0.0))
        return nn * np.log(nn / s) + nn * np.log(b) + (b - 1.0) * sum_log - nn

    ll1 = profile(np.ones(H.shape[0]))
    b_hat, ll_hat = _grid_then_golden(profile, *_B_RANGE, H.shape[0])
    better = ll_hat > ll1
    b_hat = np.where(better, b_hat, 1.0)
    stat = np.where(ok, 2.0 * np.maximum(ll_hat - ll1, 0.0), np.nan)
    if not with_estimates:
        return stat
    s = (np.where(imask, np.exp(b_hat[:, None] * logd), 0.0).sum(axis=1)
         + np.exp(b_hat * log_lead) + np.where(has_trail, np.exp(b_hat * log_trail), 0.0))
    a_hat = (nn / s) ** (1.0 / b_hat)
    return stat, b_hat, a_hat


def _eacd_batch(H, with_estimates=False):
    interior, imask, lead, trail, counts = _spells_batch(H)
    n_int = counts - 1
    ok = n_int >= MIN_INTERIOR["eacd_duration"]
    # uncensored terms D_2..D_n with lags D_1..D_{n-1}
    cur = interior[:, 1:]
    lag = interior[:, :-1]
    umask = imask[:, 1:]
    n_u = np.maximum(umask.sum(axis=1).astype(float), 1.0)
    last_int = interior[np.arange(H.shape[0]), np.maximum(n_int - 1, 0)]
    has_trail = (trail > 0) & (n_int >= 1)

    def profile_terms(gamma):
        g = 1.0 + gamma[:, None] * lag
        gc = 1.0 + gamma * last_int
        s = np.where(umask, cur / g, 0.0).sum(axis=1) + np.where(has_trail, trail / gc, 0.0)
        omega = s / n_u
        ll = -n_u * np.log(omega) - np.where(umask, np.log(g), 0.0).sum(axis=1) - n_u
        return ll, omega

    profile = lambda gamma: profile_terms(gamma)[0]
    zeros = np.zeros(H.shape[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        ll0, omega0 = profile_terms(zeros)
        g_hat, ll_hat = _grid_then_golden(profile, *_GAMMA_RANGE, H.shape[0])
        # a flat profile (e.g. constant durations) leaves gamma unidentified; keep the null
        g_hat = np.where(ll_hat > ll0 + 1e-10 * np.maximum(1.0, np.abs(ll0)), g_hat, 0.0)
        ll_hat = np.where(g_hat > 0, ll_hat, ll0)
        stat = np.where(ok, 2.0 * np.maximum(ll_hat - ll0, 0.0), np.nan)
        if not with_estimates:
            return stat
        _, omega = profile_terms(g_hat)
    return stat, omega, omega * g_hat


# -- Monte-Carlo p-values ----------------------------------------------------

_NULL_CACHE = {}


def _batch_stat(test, H, alpha):
    if test == "lr_uc":
        return _lr_uc_batch(H, alpha)
    if test == "conditional_coverage":
        return _lr_cc_batch(H, alpha)
    if test == "weibull_duration":
        return _weibull_batch(H)
    if test == "eacd_duration":
        return _eacd_batch(H)
    raise ValueError(f"unknown test {test!r}")


def null_distribution(test, P, alpha, n_sim=N_SIM, seed=0, chunk=2000):
    """Simulated statistics under i.i.d. Bernoulli(alpha) hits (cached).

    Sequences where a duration test is not applicable contribute 0.
    """
    key = (test, int(P), float(alpha), int(n_sim), int(seed))
    if key not in _NULL_CACHE:
        rng = np.random.default_rng([int(seed), int(P), int(round(alpha * 1e9)), TESTS.index(test) + 1
                                     if test in TESTS else 0])
        out = []
        for start in range(0, n_sim, chunk):
            H = rng.random((min(chunk, n_sim - start), P)) < alpha
            out.append(np.nan_to_num(_batch_stat(test, H, alpha), nan=0.0))
        sims = np.concatenate(out)
        sims.setflags(write=False)
        _NULL_CACHE[key] = sims
    return _NULL_CACHE[key]


def mc_p_value(observed, sims):
    """``(1 + #{sim >= observed}) / (N + 1)`` with a relative tie tolerance."""
    if not np.isfinite(observed):
        return float("nan")
    tol = 1e-9 * max(1.0, abs(observed))
    return (1.0 + np.count_nonzero(sims >= observed - tol)) / (sims.size + 1.0)


def _run(test, h, alpha, n_sim, seed):
    hh = _hits(h)
    a = _alpha(h, alpha)
    obs = float(_batch_stat(test, hh[None, :], a)[0])
    sims = null_distribution(test, hh.size, a, n_sim, seed)
    return obs, mc_p_value(obs, sims)


def lr_uc(h, alpha=None, n_sim=N_SIM, seed=0):
    """Unconditional coverage LR with its Monte-Carlo p-value."""
    obs, p = _run("lr_uc", h, alpha, n_sim, seed)
    return TestResult(obs, p, n_sim, {"hits": int(_hits(h).sum())})


def lr_cc(h, alpha=None, n_sim=N_SIM, seed=0):
    """Conditional coverage ``LR_UC + LR_ind`` with its Monte-Carlo p-value."""
    hh = _hits(h)
    if hh.size < 2:
        raise ValueError("conditional coverage needs P >= 2")
    a = _alpha(h, alpha)
    obs, p = _run("conditional_coverage", hh, a, n_sim, seed)
    uc = float(_lr_uc_batch(hh[None, :], a)[0])
    return TestResult(obs, p, n_sim, {"lr_uc": uc, "lr_ind": obs - uc, "hits": int(hh.sum())})


def _hits_from_durations(ds):
    h = np.zeros(ds.P, dtype=bool)
    if ds.interior.size == 0 and ds.trailing is None and ds.leading == ds.P:
        return h
    if ds.leading is not None:
        t = ds.leading
        h[t - 1] = True
        for dur in ds.interior:
            t += int(dur)
            h[t - 1] = True
    return h


def _duration_input(x, alpha):
    if isinstance(x, DurationSeries):
        return _hits_from_durations(x), _alpha(x, alpha)
    return _hits(x), _alpha(x, alpha)


def weibull_duration_test(x, alpha=None, n_sim=N_SIM, seed=0):
    """Weibull (b = 1 against b != 1) duration LR with Monte-Carlo p-value.

    ``x`` is a hit sequence or a :class:`DurationSeries`. The statistic
    is NaN (not applicable) with fewer than two interior durations.
    """
    hh, a = _duration_input(x, alpha)
    stat, b_hat, a_hat = _weibull_batch(hh[None, :], with_estimates=True)
    obs = float(stat[0])
    p = mc_p_value(obs, null_distribution("weibull_duration", hh.size, a, n_sim, seed))
    return TestResult(obs, p, n_sim, {"b": float(b_hat[0]), "a": float(a_hat[0])})


def eacd_duration_test(x, alpha=None, n_sim=N_SIM, seed=0):
    """EACD(1,0) duration LR of ``beta = 0`` with Monte-Carlo p-value.

    The conditional expected duration is ``psi_i = omega + beta D_{i-1}``;
    the statistic is NaN with fewer than three interior durations.
    """
    hh, a = _duration_input(x, alpha)
    stat, omega, beta = _eacd_batch(hh[None, :], with_estimates=True)
    obs = float(stat[0])
    p = mc_p_value(obs, null_distribution("eacd_duration", hh.size, a, n_sim, seed))
    return TestResult(obs, p, n_sim, {"omega": float(omega[0]), "beta": float(beta[0])})


def weibull_loglik(ds, a, b):
    """Weibull log-likelihood with censored spells as survival terms (oracle)."""
    d = np.asarray(ds.interior, dtype=float)
    ll = np.sum(b * math.log(a) + math.log(b) + (b - 1.0) * np.log(d) - (a * d) ** b)
    for c in (ds.leading, ds.trailing):
        if c:
            ll -= (a * c) ** b
    return float(ll)


def eacd_loglik(ds, omega, beta):
    """EACD(1,0) exponential log-likelihood with a censored trailing spell (oracle)."""
    d = np.asarray(ds.interior, dtype=float)
    psi = omega + beta * d[:-1]
    ll = -np.sum(np.log(psi) + d[1:] / psi)
    if ds.trailing:
        ll -= ds.trailing / (omega + beta * d[-1])
    return float(ll)


# -- report ------------------------------------------------------------------


def backtest_report(hit_sets, n_sim=N_SIM, seed=0):
    """Long-format rows for every (level, side, arm) hit sequence.

    Parameters
    ----------
    hit_sets : iterable of (level, side, arm, HitSequence)

    Returns
    -------
    list of dict
        Keys: level, side, test, arm, expected, realized, statistic, p_value.
    """
    rows = []
    for level, side, arm, hs in hit_sets:
        expected = int(math.floor(hs.alpha * hs.P + 0.5 + 1e-9))
        results = {
            "conditional_coverage": lr_cc(hs, n_sim=n_sim, seed=seed),
            "weibull_duration": weibull_duration_test(hs, n_sim=n_sim, seed=seed),
            "eacd_duration": eacd_duration_test(hs, n_sim=n_sim, seed=seed),
        }
        for test in TESTS:
            r = results[test]
            rows.append({"level": level, "side": side, "test": test, "arm": arm,
                         "expected": expected, "realized": hs.hits,
                         "statistic": r.statistic, "p_value": r.p_value})
    return rows


REPORT_COLUMNS = ("level", "side", "test", "arm", "expected", "realized", "statistic", "p_value")


def format_report(rows, delimiter=",", seed=None, precision=None):
    """Delimited text of :func:`backtest_report` rows plus the footer note."""
    lines = []
    if seed is not None:
        lines.append(f"# seed={seed}")
    lines.append(delimiter.join(REPORT_COLUMNS))
    for r in rows:
        vals = []
        for c in REPORT_COLUMNS:
            v = r[c]
            if isinstance(v, float):
                vals.append(("%.6f" % v) if precision == 6 else repr(float(v)))
            else:
                vals.append(str(v))
        lines.append(delimiter.join(vals))
    lines.append(f"# {FOOTER}")
    return "\n".join(lines) + "\n"
