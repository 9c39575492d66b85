"""Parametric bivariate copula families.

Every copula here exposes the same vectorized surface:

``cdf(u, v)``, ``density(u, v)``, ``log_density(u, v)``,
``h(v, u)`` (``P(V <= v | U = u)``, the derivative of the cdf in ``u``),
``h_inverse(w, u)``, ``h_rev(u, v)`` (derivative in ``v``),
``h_rev_inverse(w, v)`` and ``sample(n, rng)``.

Rotations follow one convention throughout::

    survival:  C_S(u, v)  = u + v - 1 + C(1 - u, 1 - v)
    90 degree: C_90(u, v) = v - C(1 - u, v)

The 90 degree families carry a negative parameter; the base copula uses
its absolute value.
"""

from dataclasses import dataclass
from enum import Enum
import math

import numpy as np
from scipy import integrate, optimize, special, stats

from bernvine._roots import invert_increasing

EPS = 1e-10

# Caps on the strength of dependence searched by the ML fit. An optimum
# pinned to one of these is treated as a diverging (non-converged) fit.
RHO_MAX = 0.995
CLAYTON_MAX = 28.0
GUMBEL_MAX = 17.0
CLAYTON_MIN = 1e-4
NU_MIN, NU_MAX = 2.5, 30.0
NU_GRID = (2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 13.0, 17.0, 22.0, 30.0)


class FamilyId(Enum):
    INDEPENDENCE = "Independence"
    GAUSSIAN = "Gaussian"
    STUDENT_T = "StudentT"
    CLAYTON = "Clayton"
    GUMBEL = "Gumbel"
    SURVIVAL_CLAYTON = "SurvivalClayton"
    SURVIVAL_GUMBEL = "SurvivalGumbel"
    CLAYTON_90 = "Clayton90"
    GUMBEL_90 = "Gumbel90"


CANDIDATE_FAMILIES = (
    FamilyId.GAUSSIAN,
    FamilyId.STUDENT_T,
    FamilyId.CLAYTON,
    FamilyId.GUMBEL,
    FamilyId.SURVIVAL_CLAYTON,
    FamilyId.SURVIVAL_GUMBEL,
    FamilyId.CLAYTON_90,
    FamilyId.GUMBEL_90,
)

_BASE = {
    FamilyId.CLAYTON: "clayton",
    FamilyId.SURVIVAL_CLAYTON: "clayton",
    FamilyId.CLAYTON_90: "clayton",
    FamilyId.GUMBEL: "gumbel",
    FamilyId.SURVIVAL_GUMBEL: "gumbel",
    FamilyId.GUMBEL_90: "gumbel",
    FamilyId.GAUSSIAN: "gaussian",
    FamilyId.STUDENT_T: "t",
    FamilyId.INDEPENDENCE: "indep",
}
_ROTATION = {
    FamilyId.SURVIVAL_CLAYTON: 180,
    FamilyId.SURVIVAL_GUMBEL: 180,
    FamilyId.CLAYTON_90: 90,
    FamilyId.GUMBEL_90: 90,
}


def clamp(x):
    return np.clip(np.asarray(x, dtype=float), EPS, 1.0 - EPS)


def _pin_ends(val, x):
    """Conditional cdf values with exact 0 and 1 at the ends of the range."""
    val = np.clip(val, 0.0, 1.0)
    return np.where(x <= 0.0, 0.0, np.where(x >= 1.0, 1.0, val))


def _out(x):
    return x[()] if isinstance(x, np.ndarray) else x


# ---------------------------------------------------------------------------
# Base (unrotated, symmetric) families. ``bh(v, u, *par)`` is dC(u, v)/du.
# ---------------------------------------------------------------------------

def _log_sum_pow_minus_one(a, b):
    """log(e^a + e^b - 1) for a, b >= 0."""
    big = np.maximum(a, b)
    small = np.minimum(a, b)
    return big + np.log(np.exp(small - big) - np.expm1(-big))


def _clayton_logS(u, v, th):
    return _log_sum_pow_minus_one(-th * np.log(u), -th * np.log(v))


def _clayton_cdf(u, v, th):
    return np.exp(-_clayton_logS(u, v, th) / th)


def _clayton_logpdf(u, v, th):
    return (np.log1p(th) - (th + 1.0) * (np.log(u) + np.log(v))
            - (2.0 + 1.0 / th) * _clayton_logS(u, v, th))


def _clayton_logh(v, u, th):
    return -(th + 1.0) * np.log(u) - (1.0 / th + 1.0) * _clayton_logS(u, v, th)


def _clayton_h(v, u, th):
    return np.exp(_clayton_logh(v, u, th))


def _clayton_hc(v, u, th):
    return -np.expm1(_clayton_logh(v, u, th))


def _clayton_hinv(w, u, th):
    a = -th * np.log(u)
    excess = -th / (th + 1.0) * np.log(w)
    with np.errstate(divide="ignore"):
        log_term = np.logaddexp(0.0, a + np.log(np.expm1(excess)))
    return np.exp(-log_term / th)


def _gumbel_A(x, y, th):
    big = np.maximum(x, y)
    small = np.minimum(x, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(big > 0, small / big, 0.0)
    return big * np.exp(np.log1p(ratio ** th) / th)


def _gumbel_cdf(u, v, th):
    return np.exp(-_gumbel_A(-np.log(u), -np.log(v), th))


def _gumbel_logpdf(u, v, th):
    x, y = -np.log(u), -np.log(v)
    A = _gumbel_A(x, y, th)
    return (-A + x + y + (th - 1.0) * (np.log(x) + np.log(y))
            + (1.0 - 2.0 * th) * np.log(A) + np.log(A + th - 1.0))


def _gumbel_logh(v, u, th):
    x, y = -np.log(u), -np.log(v)
    A = _gumbel_A(x, y, th)
    return -A + (1.0 - th) * np.log(A) + (th - 1.0) * np.log(x) + x


def _gumbel_h(v, u, th):
    return np.exp(_gumbel_logh(v, u, th))


def _gumbel_hc(v, u, th):
    return -np.expm1(_gumbel_logh(v, u, th))


def _gumbel_hinv(w, u, th):
    th = np.broadcast_to(th, np.broadcast(w, u).shape)

    def f(v, u_, t_):
        return _gumbel_h(np.clip(v, 1e-300, 1.0), u_, t_)

    def df(v, u_, t_):
        return np.exp(_gumbel_logpdf(u_, np.clip(v, 1e-300, 1.0), t_))

    return invert_increasing(f, df, w, (u, th))


def _gauss_logpdf(u, v, rho):
    x, y = special.ndtri(u), special.ndtri(v)
    r2 = 1.0 - rho * rho
    return -0.5 * np.log(r2) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)


def _gauss_h(v, u, rho):
    x, y = special.ndtri(u), special.ndtri(v)
    return special.ndtr((y - rho * x) / np.sqrt(1.0 - rho * rho))


def _gauss_hc(v, u, rho):
    x, y = special.ndtri(u), special.ndtri(v)
    return special.ndtr(-(y - rho * x) / np.sqrt(1.0 - rho * rho))


def _gauss_hinv(w, u, rho):
    x = special.ndtri(u)
    return special.ndtr(rho * x + np.sqrt(1.0 - rho * rho) * special.ndtri(w))


def bivariate_normal_cdf(x, y, rho):
    """P(X <= x, Y <= y) for standard normals with correlation ``rho``.

    Owen's T-function representation; exact to rounding for |rho| < 1.
    """
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    s = np.sqrt(1.0 - rho * rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        ax = (y - rho * x) / (x * s)
        ay = (x - rho * y) / (y * s)
    both = (x == 0.0) & (y == 0.0)
    ax = np.where(both, 0.0, ax)
    ay = np.where(both, 0.0, ay)
    beta = np.where((x * y > 0) | ((x * y == 0) & (x + y >= 0)), 0.0, 0.5)
    val = 0.5 * (special.ndtr(x) + special.ndtr(y)) - special.owens_t(x, ax) - special.owens_t(y, ay) - beta
    return np.where(both, 0.25 + np.arcsin(rho) / (2.0 * np.pi), val)


def _gauss_cdf(u, v, rho):
    return bivariate_normal_cdf(special.ndtri(u), special.ndtri(v), rho)


def _t_ppf(nu, p):
    """Student-t quantile via the inverse regularized incomplete beta.

    Several times faster than ``special.stdtrit``; one Newton step
    through ``stdtr`` polishes the result.
    """
    p = np.asarray(p, dtype=float)
    q = np.minimum(p, 1.0 - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = special.betaincinv(0.5 * nu, 0.5, 2.0 * q)
        x = np.sqrt(nu * (1.0 / z - 1.0)) * np.where(p < 0.5, -1.0, 1.0)
        x = np.where(p == 0.5, 0.0, x)
        logf = (special.gammaln(0.5 * (nu + 1.0)) - special.gammaln(0.5 * nu)
                - 0.5 * np.log(nu * np.pi) - 0.5 * (nu + 1.0) * np.log1p(x * x / nu))
        step = (special.stdtr(nu, x) - p) / np.exp(logf)
        x = np.where(np.isfinite(step) & (np.abs(step) < 1e-3 * (1.0 + np.abs(x))), x - step, x)
    return x


def _t_const(nu):
    return (special.gammaln((nu + 2.0) / 2.0) + special.gammaln(nu / 2.0)
            - 2.0 * special.gammaln((nu + 1.0) / 2.0))


def _t_logpdf_q(x, y, rho, nu):
    # log density given t-quantiles x, y
    r2 = 1.0 - rho * rho
    q = (x * x + y * y - 2.0 * rho * x * y) / (nu * r2)
    return (_t_const(nu) - 0.5 * np.log(r2) - (nu + 2.0) / 2.0 * np.log1p(q)
            + (nu + 1.0) / 2.0 * (np.log1p(x * x / nu) + np.log1p(y * y / nu)))


def _t_logpdf(u, v, rho, nu):
    return _t_logpdf_q(_t_ppf(nu, u), _t_ppf(nu, v), rho, nu)


def _t_h(v, u, rho, nu):
    x, y = _t_ppf(nu, u), _t_ppf(nu, v)
    scale = np.sqrt((nu + x * x) * (1.0 - rho * rho) / (nu + 1.0))
    return special.stdtr(nu + 1.0, (y - rho * x) / scale)


def _t_hc(v, u, rho, nu):
    x, y = _t_ppf(nu, u), _t_ppf(nu, v)
    scale = np.sqrt((nu + x * x) * (1.0 - rho * rho) / (nu + 1.0))
    return special.stdtr(nu + 1.0, -(y - rho * x) / scale)


def _t_hinv(w, u, rho, nu):
    x = _t_ppf(nu, u)
    scale = np.sqrt((nu + x * x) * (1.0 - rho * rho) / (nu + 1.0))
    return special.stdtr(nu, rho * x + scale * _t_ppf(nu + 1.0, w))


def _tanh_sinh(level_step=1.0 / 16, t_max=3.5):
    t = np.arange(-t_max, t_max + 0.5 * level_step, level_step)
    s = 0.5 * np.pi * np.sinh(t)
    nodes = np.tanh(s)
    weights = level_step * 0.5 * np.pi * np.cosh(t) / np.cosh(s) ** 2
    keep = np.abs(nodes) < 1.0
    return nodes[keep], weights[keep]


_TS_NODES, _TS_WEIGHTS = _tanh_sinh()


def _integrate_01(f, a, b):
    """Tanh-sinh quadrature of f over [a, b] elementwise (a, b 1-d)."""
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    s = mid[:, None] + half[:, None] * _TS_NODES[None, :]
    # distance to the endpoints kept exact to avoid cancellation at s -> 0
    s = np.where(_TS_NODES[None, :] < 0, a[:, None] + half[:, None] * (1.0 + _TS_NODES[None, :]), s)
    return half * np.sum(f(s) * _TS_WEIGHTS[None, :], axis=1)


def _cdf_by_quadrature(h, u, v):
    """C(u, v) as the integral over s in (0, u) of h(v | s).

    The integral is split at s = v and s = 1 - v, near where h(v | .)
    changes fastest under positive and negative dependence respectively.
    """
    u, v = np.broadcast_arrays(u, v)
    shape = u.shape
    uf, vf = u.ravel(), v.ravel()
    if uf.size == 0:
        return np.empty(shape)
    knots = np.stack([np.zeros_like(uf), np.minimum(vf, uf), np.minimum(1.0 - vf, uf), uf])
    knots.sort(axis=0)
    val = np.zeros_like(uf)
    for lo, hi in zip(knots[:-1], knots[1:]):
        sel = hi > lo
        if np.any(sel):
            vs = vf[sel]
            f = lambda s: h(vs[:, None], np.clip(s, 1e-300, 1.0))
            val[sel] += _integrate_01(f, lo[sel], hi[sel])
    return np.clip(val, np.maximum(uf + vf - 1.0, 0.0), np.minimum(uf, vf)).reshape(shape)


_FAMILY_TABLE = {
    "gaussian": (_gauss_cdf, _gauss_logpdf, _gauss_h, _gauss_hc, _gauss_hinv),
    "t": (None, _t_logpdf, _t_h, _t_hc, _t_hinv),
    "clayton": (_clayton_cdf, _clayton_logpdf, _clayton_h, _clayton_hc, _clayton_hinv),
    "gumbel": (_gumbel_cdf, _gumbel_logpdf, _gumbel_h, _gumbel_hc, _gumbel_hinv),
}


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParametricPairCopula:
    """A bivariate copula from one of the parametric families.

    Parameters
    ----------
    family : FamilyId
    theta : float
        Dependence parameter: correlation for Gaussian and Student-t,
        the Archimedean generator parameter otherwise (negative for the
        90 degree rotations). Ignored for the independence copula.
    nu : float, optional
        Degrees of freedom, required for (and only for) Student-t.
    """

    family: FamilyId
    theta: float = 0.0
    nu: float | None = None

    def __post_init__(self):
        fam = FamilyId(self.family)
        object.__setattr__(self, "family", fam)
        th = float(self.theta)
        object.__setattr__(self, "theta", th)
        if (self.nu is not None) != (fam is FamilyId.STUDENT_T):
            raise ValueError("nu must be given for StudentT and only for StudentT")
        if fam is FamilyId.STUDENT_T:
            object.__setattr__(self, "nu", float(self.nu))
            if not self.nu > 2.0:
                raise ValueError(f"nu must exceed 2, got {self.nu}")
        base = _BASE[fam]
        rot = _ROTATION.get(fam, 0)
        if base in ("gaussian", "t") and not -1.0 < th < 1.0:
            raise ValueError(f"{fam.value}: correlation must lie in (-1, 1), got {th}")
        if base == "clayton":
            if (rot == 90 and not th < 0.0) or (rot != 90 and not th > 0.0):
                raise ValueError(f"{fam.value}: parameter {th} outside admissible domain")
        if base == "gumbel":
            if (rot == 90 and not th <= -1.0) or (rot != 90 and not th >= 1.0):
                raise ValueError(f"{fam.value}: parameter {th} outside admissible domain")

    # -- bookkeeping -----------------------------------------------------

    @property
    def n_params(self):
        fam = self.family
        if fam is FamilyId.INDEPENDENCE:
            return 0
        return 2 if fam is FamilyId.STUDENT_T else 1

    @property
    def tau(self):
        """Kendall's tau implied by the parameters."""
        base = _BASE[self.family]
        th = abs(self.theta)
        if base == "indep":
            return 0.0
        if base in ("gaussian", "t"):
            return 2.0 / math.pi * math.asin(self.theta)
        val = th / (th + 2.0) if base == "clayton" else 1.0 - 1.0 / th
        return -val if _ROTATION.get(self.family) == 90 else val

    def _par(self):
        base = _BASE[self.family]
        if base == "t":
            return (self.theta, self.nu)
        if base in ("clayton", "gumbel"):
            return (abs(self.theta),)
        return (self.theta,)

    def _base_fns(self):
        """(cdf, logpdf, h, 1 - h, h_inverse) of the unrotated base copula."""
        base = _BASE[self.family]
        par = self._par()
        if base == "indep":
            return (lambda u, v: u * v,
                    lambda u, v: np.zeros(np.broadcast(u, v).shape),
                    lambda v, u: v * np.ones_like(u),
                    lambda v, u: (1.0 - v) * np.ones_like(u),
                    lambda w, u: w * np.ones_like(u))
        cdf, lpdf, h, hc, hinv = _FAMILY_TABLE[base]
        bh = lambda v, u: h(v, u, *par)
        if cdf is None:
            bcdf = lambda u, v: _cdf_by_quadrature(bh, u, v)
        else:
            bcdf = lambda u, v: cdf(u, v, *par)
        return (bcdf, lambda u, v: lpdf(u, v, *par), bh,
                lambda v, u: hc(v, u, *par), lambda w, u: hinv(w, u, *par))

    # -- evaluation ------------------------------------------------------

    def cdf(self, u, v):
        u0 = np.asarray(u, dtype=float)
        v0 = np.asarray(v, dtype=float)
        u, v = np.broadcast_arrays(clamp(u0), clamp(v0))
        bcdf = self._base_fns()[0]
        rot = _ROTATION.get(self.family, 0)
        if rot == 180:
            val = u + v - 1.0 + bcdf(1.0 - u, 1.0 - v)
        elif rot == 90:
            val = v - bcdf(1.0 - u, v)
        else:
            val = bcdf(u, v)
        val = np.clip(val, np.maximum(u + v - 1.0, 0.0), np.minimum(u, v))
        # exact boundary behaviour
        u0, v0 = np.broadcast_arrays(u0, v0)
        val = np.where(v0 >= 1.0, u0, val)
        val = np.where(u0 >= 1.0, v0, val)
        val = np.where((u0 <= 0.0) | (v0 <= 0.0), 0.0, val)
        return _out(np.clip(val, 0.0, 1.0))

    def log_density(self, u, v):
        u, v = np.broadcast_arrays(clamp(u), clamp(v))
        lpdf = self._base_fns()[1]
        rot = _ROTATION.get(self.family, 0)
        if rot == 180:
            return _out(lpdf(1.0 - u, 1.0 - v))
        if rot == 90:
            return _out(lpdf(1.0 - u, v))
        return _out(lpdf(u, v))

    def density(self, u, v):
        return _out(np.exp(self.log_density(u, v)))

    def h(self, v, u):
        """Conditional cdf P(V <= v | U = u)."""
        v0 = np.asarray(v, dtype=float)
        v, u = np.broadcast_arrays(clamp(v0), clamp(u))
        _, _, bh, bhc, _ = self._base_fns()
        rot = _ROTATION.get(self.family, 0)
        if rot == 180:
            val = bhc(1.0 - v, 1.0 - u)
        elif rot == 90:
            val = bh(v, 1.0 - u)
        else:
            val = bh(v, u)
        return _out(_pin_ends(val, np.broadcast_to(v0, val.shape)))

    def h_inverse(self, w, u):
        """Solve h(v | u) = w for v."""
        w = np.clip(np.asarray(w, dtype=float), 0.0, 1.0)
        w, u = np.broadcast_arrays(w, clamp(u))
        hinv = self._base_fns()[4]
        rot = _ROTATION.get(self.family, 0)
        wc = clamp(w)
        if _BASE[self.family] == "gumbel" and rot != 0:
            val = invert_increasing(lambda x, c: self.h(x, c), lambda x, c: self.density(c, x), wc, (u,))
        elif rot == 180:
            val = 1.0 - hinv(1.0 - wc, 1.0 - u)
        elif rot == 90:
            val = hinv(wc, 1.0 - u)
        else:
            val = hinv(wc, u)
        val = np.where(w <= 0.0, 0.0, np.where(w >= 1.0, 1.0, val))
        return _out(np.clip(val, 0.0, 1.0))

    def h_rev(self, u, v):
        """Conditional cdf P(U <= u | V = v)."""
        u0 = np.asarray(u, dtype=float)
        u, v = np.broadcast_arrays(clamp(u0), clamp(v))
        _, _, bh, bhc, _ = self._base_fns()
        rot = _ROTATION.get(self.family, 0)
        if rot == 180:
            val = bhc(1.0 - u, 1.0 - v)
        elif rot == 90:
            val = bhc(1.0 - u, v)
        else:
            val = bh(u, v)
        return _out(_pin_ends(val, np.broadcast_to(u0, val.shape)))

    def h_rev_inverse(self, w, v):
        """Solve h_rev(u | v) = w for u."""
        w = np.clip(np.asarray(w, dtype=float), 0.0, 1.0)
        w, v = np.broadcast_arrays(w, clamp(v))
        hinv = self._base_fns()[4]
        rot = _ROTATION.get(self.family, 0)
        wc = clamp(w)
        if _BASE[self.family] == "gumbel" and rot != 0:
            val = invert_increasing(lambda x, c: self.h_rev(x, c), lambda x, c: self.density(x, c), wc, (v,))
        elif rot == 180:
            val = 1.0 - hinv(1.0 - wc, 1.0 - v)
        elif rot == 90:
            val = 1.0 - hinv(1.0 - wc, v)
        else:
            val = hinv(wc, v)
        val = np.where(w <= 0.0, 0.0, np.where(w >= 1.0, 1.0, val))
        return _out(np.clip(val, 0.0, 1.0))

    def sample(self, n, rng):
        """Draw ``n`` pairs by conditional inversion."""
        u = rng.uniform(size=n)
        w = rng.uniform(size=n)
        if n == 0:
            return np.empty((0, 2))
        return np.column_stack([u, self.h_inverse(w, u)])


INDEPENDENCE = ParametricPairCopula(FamilyId.INDEPENDENCE)


def tau_to_parameter(family, tau):
    """Invert Kendall's tau for a one-parameter family (or t correlation)."""
    family = FamilyId(family)
    base = _BASE[family]
    if base in ("gaussian", "t"):
        return math.sin(math.pi * tau / 2.0)
    rot = _ROTATION.get(family, 0)
    t = -tau if rot == 90 else tau
    if t <= 0:
        raise ValueError(f"{family.value} cannot represent tau={tau}")
    th = 2.0 * t / (1.0 - t) if base == "clayton" else 1.0 / (1.0 - t)
    return -th if rot == 90 else th


# ---------------------------------------------------------------------------
# Maximum likelihood
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairFit:
    copula: ParametricPairCopula
    loglik: float
    aic: float
    converged: bool
    message: str = ""


def _family_interval(family):
    """Magnitude bounds (lower, upper) of the dependence parameter."""
    base = _BASE[family]
    if base in ("gaussian", "t"):
        return -RHO_MAX, RHO_MAX
    if base == "clayton":
        return CLAYTON_MIN, CLAYTON_MAX
    return 1.0, GUMBEL_MAX


def _tau_to_magnitude(base, t):
    if base == "clayton":
        return 2.0 * t / (1.0 - t)
    if base == "gumbel":
        return 1.0 / (1.0 - t)
    return math.sin(math.pi * t / 2.0)


def _brent(negll, lo, hi, center_lo, center_hi):
    """Bounded Brent on a tau-derived bracket, widened if the optimum sits on it."""
    a, b = max(lo, center_lo), min(hi, center_hi)
    if not a < b:
        a, b = lo, hi
    res = optimize.minimize_scalar(negll, bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-7})
    span = b - a
    interior_edge = ((res.x - a < 1e-4 * span and a > lo) or (b - res.x < 1e-4 * span and b < hi))
    if interior_edge:
        res = optimize.minimize_scalar(negll, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-7})
    return res


def _at_cap(x, hi, lo=None):
    tol = 1e-4 * (abs(hi) + 1.0)
    if abs(x - hi) <= tol:
        return True
    return lo is not None and abs(x - lo) <= tol


def _oriented(family, uv):
    """Map data so that the base (unrotated) copula applies."""
    u, v = uv[:, 0], uv[:, 1]
    rot = _ROTATION.get(family, 0)
    if rot == 180:
        return 1.0 - u, 1.0 - v
    if rot == 90:
        return 1.0 - u, v
    return u, v


def fit_ml(family, data):
    """Maximum likelihood fit of one family to copula-scale data.

    Parameters
    ----------
    family : FamilyId
    data : array_like, shape (n, 2)
        Observations strictly inside the unit square, ``n >= 10``.

    Returns
    -------
    PairFit
        ``converged`` is False when the likelihood is non-finite or the
        dependence parameter runs to its capped strong-dependence limit.
    """
    family = FamilyId(family)
    uv = np.asarray(data, dtype=float)
    if uv.ndim != 2 or uv.shape[1] != 2:
        raise ValueError("data must have shape (n, 2)")
    if uv.shape[0] < 10:
        raise ValueError("fit_ml needs at least 10 observations")
    if not np.all((uv > 0.0) & (uv < 1.0)):
        raise ValueError("observations must lie strictly inside (0, 1)^2")

    if family is FamilyId.INDEPENDENCE:
        return PairFit(INDEPENDENCE, 0.0, 0.0, True)

    uv = clamp(uv)
    base = _BASE[family]
    rot = _ROTATION.get(family, 0)
    bu, bv = _oriented(family, uv)
    lo, hi = _family_interval(family)
    tau_hat = _kendall(bu, bv)
    message = ""

    if base == "gaussian":
        x, y = special.ndtri(bu), special.ndtri(bv)
        sxx = x * x + y * y
        sxy = x * y

        def negll(r):
            r2 = 1.0 - r * r
            return -np.sum(-0.5 * np.log(r2) - (r * r * sxx - 2.0 * r * sxy) / (2.0 * r2))

        c = math.sin(math.pi * tau_hat / 2.0)
        res = _brent(negll, lo, hi, c - 0.2, c + 0.2)
        theta, nu = float(res.x), None
        ll = -float(res.fun)
        converged = bool(res.success) and not _at_cap(theta, hi, lo)
    elif base == "t":
        c = math.sin(math.pi * tau_hat / 2.0)
        cache = {}

        def profile(nu_):
            if nu_ in cache:
                return cache[nu_]
            x, y = _t_ppf(nu_, np.stack([bu, bv]))

            def negll(r):
                return -np.sum(_t_logpdf_q(x, y, r, nu_))

            res = _brent(negll, lo, hi, c - 0.2, c + 0.2)
            cache[nu_] = (float(res.fun), float(res.x))
            return cache[nu_]

        vals = [profile(g)[0] for g in NU_GRID]
        k = int(np.argmin(vals))
        if 0 < k < len(NU_GRID) - 1:
            res = optimize.minimize_scalar(lambda z: profile(float(z))[0],
                                           bounds=(NU_GRID[k - 1], NU_GRID[k + 1]),
                                           method="bounded", options={"xatol": 1e-2})
            nu = float(res.x)
        else:
            nu = NU_GRID[k]
        fun, theta = profile(nu)
        ll = -fun
        converged = not _at_cap(theta, hi, lo)
        if nu >= NU_MAX:
            message = "nu at upper grid limit"
    else:
        lpdf = _clayton_logpdf if base == "clayton" else _gumbel_logpdf

        def negll(th):
            return -np.sum(lpdf(bu, bv, th))

        t0 = min(max(tau_hat, 0.01), 0.9)
        center_lo = _tau_to_magnitude(base, max(t0 - 0.2, 1e-3))
        center_hi = _tau_to_magnitude(base, min(t0 + 0.2, 0.95))
        res = _brent(negll, lo, hi, center_lo, center_hi)
        mag = float(res.x)
        if base == "gumbel":
            mag = max(mag, 1.0)
        theta, nu = (-mag if rot == 90 else mag), None
        ll = -float(res.fun)
        converged = bool(res.success) and not _at_cap(mag, hi)

    if not np.isfinite(ll):
        converged = False
        message = "non-finite log-likelihood"
    elif not converged and not message:
        message = "dependence parameter diverged to its cap"
    cop = ParametricPairCopula(family, theta, nu)
    n_par = cop.n_params
    aic = -2.0 * ll + 2.0 * n_par
    return PairFit(cop, ll, aic, converged and np.isfinite(aic), message)


def _kendall(x, y):
    t = stats.kendalltau(x, y).statistic
    return 0.0 if not np.isfinite(t) else float(t)
