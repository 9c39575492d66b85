"""Bernstein copulas: basis, evaluation, conditional inversion, sampling, fit."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ._roots import invert_increasing
from .empirical import bin_to_table, PseudoSample
from .projection import qp_project

MARGIN_TOL = 1e-9


def bernstein_basis(m, k, z):
    """Bernstein polynomial ``C(m, k) z^k (1 - z)^(m - k)``.

    Evaluated in log space so large degrees neither overflow nor
    underflow prematurely.

    Parameters
    ----------
    m : int
        Degree, ``m >= 0``.
    k : int or array_like of int
        Index with ``0 <= k <= m``.
    z : array_like
        Points in [0, 1].
    """
    k = np.asarray(k)
    if np.any((k < 0) | (k > m)):
        raise ValueError(f"index out of range 0..{m}")
    z = np.asarray(z, dtype=float)
    logc = special.gammaln(m + 1.0) - special.gammaln(k + 1.0) - special.gammaln(m - k + 1.0)
    return np.exp(logc + special.xlogy(k, z) + special.xlog1py(m - k, -z))


_DIRECT_MAX_DEGREE = 60


def basis_matrix(m, z):
    """All degree-``m`` basis values at ``z``; shape ``z.shape + (m + 1,)``."""
    z = np.asarray(z, dtype=float)
    if m > _DIRECT_MAX_DEGREE:
        return bernstein_basis(m, np.arange(m + 1), z[..., None])
    # power tables by repeated multiplication; binomials are exact here
    zc = np.clip(z, 0.0, 1.0)[..., None]
    pw = np.empty(z.shape + (m + 1,))
    qw = np.empty_like(pw)
    pw[..., 0] = 1.0
    qw[..., 0] = 1.0
    if m:
        pw[..., 1:] = zc
        qw[..., 1:] = 1.0 - zc
        np.cumprod(pw, axis=-1, out=pw)
        np.cumprod(qw, axis=-1, out=qw)
    return special.comb(m, np.arange(m + 1)) * pw * qw[..., ::-1]


@dataclass(frozen=True, eq=False)
class BernsteinCopula:
    """Bernstein copula with an m x m weight grid.

    Parameters
    ----------
    p : array_like, shape (m, m)
        Nonnegative weights with every row and column summing to 1/m.
        Row index refers to the first argument.
    objective : float, optional
        Squared projection distance recorded by :func:`fit`.
    """

    p: np.ndarray
    objective: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("weights must form a square matrix")
        m = p.shape[0]
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("weights must be finite and nonnegative")
        if (np.abs(p.sum(axis=0) - 1.0 / m).max() > MARGIN_TOL
                or np.abs(p.sum(axis=1) - 1.0 / m).max() > MARGIN_TOL):
            raise ValueError("weights must have uniform margins 1/m")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        # cumulative weights P(U1 < k1, U2 < k2) on a padded (m+1) x (m+1) grid
        cum = np.zeros((m + 1, m + 1))
        cum[1:, 1:] = p.cumsum(axis=0).cumsum(axis=1)
        # partial sums along the second index, used by h
        row_cum = np.zeros((m, m + 1))
        row_cum[:, 1:] = p.cumsum(axis=1)
        col_cum = np.zeros((m, m + 1))
        col_cum[:, 1:] = p.T.cumsum(axis=1)
        for arr in (cum, row_cum, col_cum):
            arr.setflags(write=False)
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_row_cum", row_cum)
        object.__setattr__(self, "_col_cum", col_cum)

    @property
    def m(self):
        return self.p.shape[0]

    @property
    def n_params(self):
        # free weights after the 2m - 1 margin constraints
        return (self.m - 1) ** 2

    def __eq__(self, other):
        return isinstance(other, BernsteinCopula) and np.array_equal(self.p, other.p)

    def __hash__(self):
        return hash(self.p.tobytes())

    def _pair(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        return np.clip(u, 0.0, 1.0), np.clip(v, 0.0, 1.0)

    def density(self, u, v):
        u, v = self._pair(u, v)
        m = self.m
        bu, bv = basis_matrix(m - 1, u), basis_matrix(m - 1, v)
        val = m * m * np.einsum("...i,ij,...j->...", bu, self.p, bv)
        return np.maximum(val, 0.0)[()]

    def log_density(self, u, v):
        with np.errstate(divide="ignore"):
            return np.log(self.density(u, v))

    def cdf(self, u, v):
        u, v = self._pair(u, v)
        m = self.m
        val = np.einsum("...i,ij,...j->...", basis_matrix(m, u), self._cum, basis_matrix(m, v))
        return np.clip(val, np.maximum(u + v - 1.0, 0.0), np.minimum(u, v))[()]

    def _cond(self, x, given, cum):
        m = self.m
        val = m * np.einsum("...i,ij,...j->...", basis_matrix(m - 1, given), cum, basis_matrix(m, x))
        return np.clip(val, 0.0, 1.0)

    def h(self, v, u):
        """Conditional cdf P(V <= v | U = u) = dC/du."""
        u, v = self._pair(u, v)
        return self._cond(v, u, self._row_cum)[()]

    def h_rev(self, u, v):
        """Conditional cdf P(U <= u | V = v) = dC/dv."""
        u, v = self._pair(u, v)
        return self._cond(u, v, self._col_cum)[()]

    def _invert(self, w, given, cum):
        # for fixed ``given`` the conditional cdf is a degree-m polynomial
        # with Bernstein coefficients ``coef``; its derivative has
        # coefficients ``m * diff(coef)``
        m = self.m
        shape = w.shape
        coef = m * basis_matrix(m - 1, given.ravel()) @ cum
        dcoef = m * np.diff(coef, axis=1)
        idx = np.arange(coef.shape[0], dtype=float)

        def f(x, i):
            return np.einsum("nj,nj->n", coef[i.astype(np.intp)], basis_matrix(m, x))

        def df(x, i):
            return np.einsum("nj,nj->n", dcoef[i.astype(np.intp)], basis_matrix(m - 1, x))

        x = invert_increasing(f, df, w.ravel(), (idx,))
        x = np.where(w.ravel() <= 0.0, 0.0, np.where(w.ravel() >= 1.0, 1.0, x))
        return x.reshape(shape)[()]

    def h_inverse(self, w, u):
        """Solve ``h(v | u) = w`` by bracketing followed by Newton steps."""
        w, u = self._pair(w, u)
        return self._invert(w, u, self._row_cum)

    def h_rev_inverse(self, w, v):
        """Solve ``h_rev(u | v) = w`` for u."""
        w, v = self._pair(w, v)
        return self._invert(w, v, self._col_cum)

    def sample(self, n, rng):
        """Exact draws from the Beta-product mixture."""
        m = self.m
        if n == 0:
            return np.empty((0, 2))
        flat = self.p.ravel()
        cells = rng.choice(m * m, size=n, p=flat / flat.sum())
        k1, k2 = np.divmod(cells, m)
        return np.column_stack([rng.beta(k1 + 1, m - k1), rng.beta(k2 + 1, m - k2)])


def default_grid_size(n):
    """Cube-root rule ``max(4, round(n ** (1/3)))``."""
    return max(4, int(round(n ** (1.0 / 3.0))))


def fit(s, m=None):
    """Bernstein copula fitted to a bivariate sample.

    The sample is binned on an m x m grid and the resulting table is
    projected onto tables with uniform margins.

    Parameters
    ----------
    s : PseudoSample or array_like, shape (n, 2)
    m : int, optional
        Grid size; defaults to :func:`default_grid_size`.
    """
    u = s.u if isinstance(s, PseudoSample) else np.asarray(s, dtype=float)
    n = u.shape[0]
    if m is None:
        m = default_grid_size(n)
    if n < m:
        raise ValueError(f"need at least m={m} observations, got {n}")
    if n < 5 * m * m:
        warnings.warn(f"sparse grid: n={n} < 5*m^2={5 * m * m}", RuntimeWarning, stacklevel=2)
    res = qp_project(bin_to_table(u, m))
    return BernsteinCopula(res.x, objective=res.objective)
