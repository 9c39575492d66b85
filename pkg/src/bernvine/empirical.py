"""Pseudo-observations, the empirical copula, Kendall's tau and gridded tables."""

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class PseudoSample:
    """Rank-transformed sample on the open unit cube.

    Attributes
    ----------
    u : ndarray, shape (n, d)
        Column-wise ranks divided by ``n + 1``.
    """

    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        if u.ndim != 2:
            raise ValueError("pseudo-sample must be a 2-d array")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def n(self):
        return self.u.shape[0]

    @property
    def d(self):
        return self.u.shape[1]

    def columns(self, i, j):
        """Two-column sub-sample ``(i, j)``."""
        return PseudoSample(self.u[:, [i, j]])


def pseudo_observations(x):
    """Column-wise ranks scaled by ``n + 1``; ties receive average ranks.

    Parameters
    ----------
    x : array_like, shape (n, d) or (n,)

    Returns
    -------
    PseudoSample
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 observations, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    ranks = stats.rankdata(x, method="average", axis=0)
    return PseudoSample(ranks / (n + 1.0))


def _as_pairs(s):
    u = s.u if isinstance(s, PseudoSample) else np.asarray(s, dtype=float)
    if u.ndim != 2 or u.shape[1] != 2:
        raise ValueError("expected a two-column sample")
    return u


def empirical_copula_cdf(s, x, y):
    """Empirical copula ``C_n(x, y) = #{k : U_k1 <= x, U_k2 <= y} / n``.

    ``x`` and ``y`` broadcast against each other.
    """
    u = _as_pairs(s)
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    n = u.shape[0]
    # sort by the first coordinate, then count second coordinates per prefix
    order = np.argsort(u[:, 0], kind="stable")
    u1, u2 = u[order, 0], u[order, 1]
    pref = np.searchsorted(u1, x.ravel(), side="right")
    out = np.empty(x.size)
    for idx, (k, yy) in enumerate(zip(pref, y.ravel())):
        out[idx] = np.count_nonzero(u2[:k] <= yy)
    return (out / n).reshape(x.shape)


def kendall_tau(s, i=0, j=1):
    """Tie-adjusted (tau-b) Kendall's tau between columns ``i`` and ``j``.

    Raises
    ------
    ValueError
        If either column is constant.
    """
    u = s.u if isinstance(s, PseudoSample) else np.asarray(s, dtype=float)
    a, b = u[:, i], u[:, j]
    if a.size < 2:
        raise ValueError("need at least 2 observations")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise ValueError("Kendall's tau undefined for a constant column")
    return float(stats.kendalltau(a, b).statistic)


def kendall_matrix(s):
    """Matrix of pairwise Kendall's tau values."""
    d = s.d
    tau = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            tau[i, j] = tau[j, i] = kendall_tau(s, i, j)
    return tau


@dataclass(frozen=True)
class ContingencyTable:
    """Relative cell frequencies on an m x m grid of the unit square.

    Row ``k`` indexes the first coordinate's cell ``((k-1)/m, k/m]``.
    """

    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError("contingency table must be a square matrix")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ValueError("contingency table entries must be finite and nonnegative")
        if abs(a.sum() - 1.0) > 1e-12:
            raise ValueError(f"table must sum to 1, got {a.sum()!r}")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def m(self):
        return self.a.shape[0]

    @property
    def row_sums(self):
        return self.a.sum(axis=1)

    @property
    def col_sums(self):
        return self.a.sum(axis=0)


def cell_index(u, m):
    """Grid cell of each value: ``((k-1)/m, k/m]`` maps to ``k-1``, 0 included in the first."""
    return np.clip(np.ceil(np.asarray(u) * m).astype(int) - 1, 0, m - 1)


def bin_to_table(s, m):
    """Relative frequency of a bivariate pseudo-sample in each grid cell."""
    u = _as_pairs(s)
    if m < 2:
        raise ValueError(f"grid size must be at least 2, got {m}")
    n = u.shape[0]
    if n < 1:
        raise ValueError("empty sample")
    k1, k2 = cell_index(u[:, 0], m), cell_index(u[:, 1], m)
    counts = np.bincount(k1 * m + k2, minlength=m * m).reshape(m, m)
    return ContingencyTable(counts / n)
