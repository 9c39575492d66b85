"""GARCH(1,1) margins with standardized Student-t innovations."""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, signal, special

from .families import _t_ppf

MIN_OBS = 100
NU_CAP = 500.0
VARIANCE_INPUTS = ("demeaned", "raw")


@dataclass(frozen=True)
class GarchModel:
    """Fitted GARCH(1,1)-t model.

    ``sigma2_last`` and ``eps_last`` hold the filtered state at the last
    observation of the estimation window.
    """

    mu: float
    alpha0: float
    alpha1: float
    beta: float
    nu: float
    sigma2_last: float = float("nan")
    eps_last: float = float("nan")
    variance_input: str = "demeaned"
    loglik: float = float("nan")
    converged: bool = True

    def __post_init__(self):
        if not self.alpha0 > 0 or self.alpha1 < 0 or self.beta < 0:
            raise ValueError("GARCH coefficients out of range")
        if not self.nu > 2:
            raise ValueError(f"nu must exceed 2, got {self.nu}")
        if self.variance_input not in VARIANCE_INPUTS:
            raise ValueError(f"variance_input must be one of {VARIANCE_INPUTS}")

    @property
    def persistence(self):
        return self.alpha1 + self.beta


def t_quantile(nu, p):
    """Quantile of the unit-variance Student-t distribution."""
    return _t_ppf(nu, p) * math.sqrt((nu - 2.0) / nu)


def t_cdf(nu, z):
    """Cdf of the unit-variance Student-t distribution."""
    return special.stdtr(nu, np.asarray(z) * math.sqrt(nu / (nu - 2.0)))


def _std_t_logpdf(z, nu):
    c = (special.gammaln(0.5 * (nu + 1.0)) - special.gammaln(0.5 * nu)
         - 0.5 * math.log(math.pi * (nu - 2.0)))
    return c - 0.5 * (nu + 1.0) * np.log1p(z * z / (nu - 2.0))


def filter_variance(r, mu, alpha0, alpha1, beta, variance_input="demeaned", sigma2_init=None):
    """Conditional variances sigma2_t for t = 1..T.

    ``sigma2_1`` defaults to the sample variance of ``r``.
    """
    r = np.asarray(r, dtype=float)
    shock = r - mu if variance_input == "demeaned" else r
    s0 = np.var(r) if sigma2_init is None else sigma2_init
    drive = alpha0 + alpha1 * shock[:-1] ** 2
    out = np.empty_like(r)
    out[0] = s0
    if r.size > 1:
        out[1:] = signal.lfilter([1.0], [1.0, -beta], drive, zi=[beta * s0])[0]
    return out


def _unpack(x):
    mu, la0, g1, g2, lnu = x
    # softmax with a zero reference keeps alpha1 + beta < 1
    mx = max(g1, g2, 0.0)
    e1, e2, e0 = math.exp(g1 - mx), math.exp(g2 - mx), math.exp(-mx)
    tot = e0 + e1 + e2
    nu = 2.0 + math.exp(min(lnu, math.log(NU_CAP)))
    return mu, math.exp(la0), e1 / tot, e2 / tot, nu


def _pack(mu, alpha0, alpha1, beta, nu):
    rest = max(1.0 - alpha1 - beta, 1e-8)
    return np.array([mu, math.log(alpha0), math.log(max(alpha1, 1e-8) / rest),
                     math.log(max(beta, 1e-8) / rest), math.log(nu - 2.0)])


def garch_loglik(r, mu, alpha0, alpha1, beta, nu, variance_input="demeaned"):
    s2 = filter_variance(r, mu, alpha0, alpha1, beta, variance_input)
    z = (r - mu) / np.sqrt(s2)
    return float(np.sum(_std_t_logpdf(z, nu) - 0.5 * np.log(s2)))


def fit_qml(r, variance_input="demeaned", start=None):
    """(Quasi-)maximum likelihood fit of a GARCH(1,1)-t model.

    Parameters
    ----------
    r : array_like
        Return series, at least 100 observations with positive variance.
    variance_input : {'demeaned', 'raw'}
        Whether the ARCH term uses ``(r - mu)^2`` or ``r^2``.
    start : GarchModel, optional
        Warm start, e.g. the previous rolling window's fit.

    Returns
    -------
    GarchModel
    """
    r = np.asarray(r, dtype=float)
    if r.ndim != 1 or r.size < MIN_OBS:
        raise ValueError(f"need a 1-d series with at least {MIN_OBS} observations")
    if not np.all(np.isfinite(r)):
        raise ValueError("series contains non-finite values")
    var = float(np.var(r))
    if not var > 0:
        raise ValueError("series has zero variance")
    if variance_input not in VARIANCE_INPUTS:
        raise ValueError(f"variance_input must be one of {VARIANCE_INPUTS}")

    # fit on a unit-variance scale; alpha0 and mu rescale afterwards
    scale = math.sqrt(var)
    y = r / scale

    def negll_at(mu, a0, a1, b, nu):
        s2 = filter_variance(y, mu, a0, a1, b, variance_input)
        if not np.all(s2 > 0):
            return 1e300
        z = (y - mu) / np.sqrt(s2)
        val = -np.sum(_std_t_logpdf(z, nu) - 0.5 * np.log(s2))
        return val if np.isfinite(val) else 1e300

    def negll(x):
        return negll_at(*_unpack(x))

    if start is not None:
        starts = [_pack(start.mu / scale, start.alpha0 / var, start.alpha1, start.beta, start.nu)]
    else:
        m0 = float(np.mean(y))
        starts = [_pack(m0, 0.05, 0.08, 0.87, 8.0), _pack(m0, 0.9, 0.05, 0.05, 8.0)]
    best = None
    for x0 in starts:
        res = optimize.minimize(negll, x0, method="Nelder-Mead",
                                options={"xatol": 1e-7, "fatol": 1e-9, "maxiter": 4000, "maxfev": 8000})
        if best is None or res.fun < best.fun:
            best = res
    polish = optimize.minimize(negll, best.x, method="BFGS", options={"gtol": 1e-6, "maxiter": 200})
    if polish.fun <= best.fun:
        best_x, fun = polish.x, polish.fun
    else:
        best_x, fun = best.x, best.fun
    converged = bool(np.isfinite(fun) and fun < 1e299)
    mu, a0, a1, b, nu = _unpack(best_x)
    if a1 < 1e-6 and b > 0:
        # without an ARCH effect beta only shapes a deterministic drift away
        # from the initial variance; use the constant-variance model instead
        flat_a0 = float(np.mean((y - mu) ** 2)) if variance_input == "demeaned" else float(np.mean(y * y))
        res = optimize.minimize_scalar(lambda la: negll_at(mu, math.exp(la), 0.0, 0.0, nu),
                                       bounds=(math.log(flat_a0) - 2, math.log(flat_a0) + 2),
                                       method="bounded")
        a0, a1, b, fun = math.exp(res.x), 0.0, 0.0, res.fun
    if a1 + b > 1.0 - 1e-6:
        warnings.warn("GARCH optimum at the stationarity boundary", RuntimeWarning, stacklevel=2)
    mu, a0 = mu * scale, a0 * var
    s2 = filter_variance(r, mu, a0, a1, b, variance_input)
    loglik = -fun - r.size * math.log(scale)
    shock = r[-1] - mu if variance_input == "demeaned" else r[-1]
    return GarchModel(mu, a0, a1, b, nu, float(s2[-1]), float(shock), variance_input,
                      float(loglik), converged)


def standardized_residuals(g, r):
    """``(r_t - mu) / sigma_t`` under the filtered variance recursion."""
    r = np.asarray(r, dtype=float)
    s2 = filter_variance(r, g.mu, g.alpha0, g.alpha1, g.beta, g.variance_input)
    return (r - g.mu) / np.sqrt(s2)


def forecast_from_state(g, eps_last, sigma2_last):
    """One-step variance ``alpha0 + alpha1 * eps^2 + beta * sigma2``."""
    return g.alpha0 + g.alpha1 * eps_last ** 2 + g.beta * sigma2_last


def forecast_one_step(g, r=None):
    """One-day-ahead mean and volatility.

    With ``r`` given, the recursion is filtered over ``r``; otherwise the
    state stored at fit time is used.

    Returns
    -------
    mu_hat, sigma_hat : float
    """
    if r is None:
        s2 = forecast_from_state(g, g.eps_last, g.sigma2_last)
    else:
        r = np.asarray(r, dtype=float)
        s2_path = filter_variance(r, g.mu, g.alpha0, g.alpha1, g.beta, g.variance_input)
        shock = r[-1] - g.mu if g.variance_input == "demeaned" else r[-1]
        s2 = forecast_from_state(g, shock, s2_path[-1])
    return g.mu, math.sqrt(s2)


def garch_path(mu, alpha0, alpha1, beta, z, sigma2_init=None):
    """Returns driven by given unit-variance innovations ``z``."""
    z = np.asarray(z, dtype=float)
    r = np.empty_like(z)
    s2 = alpha0 / max(1.0 - alpha1 - beta, 1e-6) if sigma2_init is None else sigma2_init
    for t in range(z.size):
        eps = math.sqrt(s2) * z[t]
        r[t] = mu + eps
        s2 = alpha0 + alpha1 * eps * eps + beta * s2
    return r


def simulate_garch(mu, alpha0, alpha1, beta, nu, n, rng, burn=500):
    """Simulated GARCH(1,1)-t returns (demeaned recursion) after a burn-in."""
    z = rng.standard_t(nu, size=n + burn) * math.sqrt((nu - 2.0) / nu)
    return garch_path(mu, alpha0, alpha1, beta, z)[burn:]
