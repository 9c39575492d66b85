"""Projection of contingency tables onto tables with uniform margins.

The feasible set is the transportation polytope of nonnegative m x m
tables with every row and column summing to 1/m. The projection is a
strictly convex QP with identity Hessian, solved by the dual active-set
method of Goldfarb and Idnani.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .empirical import ContingencyTable

FEAS_TOL = 1e-9
DUAL_TOL = 1e-10
ZERO_TOL = 1e-12


class ProjectionError(ArithmeticError):
    """Raised on solver breakdown (infeasibility or iteration exhaustion)."""


@dataclass(frozen=True)
class ProjectedTable:
    """Result of :func:`qp_project`.

    Attributes
    ----------
    x : ndarray, shape (m, m)
        Projected table, nonnegative with uniform margins.
    objective : float
        ``sum((x - a)**2)``.
    active_set_size : int
        Number of nonnegativity bounds active at the solution.
    iterations : int
        Constraint additions plus deletions performed.
    active : tuple of int
        Flattened (row-major) indices of the active bounds.
    """

    x: np.ndarray
    objective: float
    active_set_size: int
    iterations: int
    active: tuple = ()


def _table(a):
    if isinstance(a, ContingencyTable):
        return a.a
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square table")
    return a


def lagrange_project(a):
    """Closed-form correction ``a_ij - a_.j/m - a_i./m + 2/m^2``.

    This is the Euclidean projection onto the affine set of tables with
    margins 1/m (for input summing to one); entries may be negative.
    """
    a = _table(a)
    m = a.shape[0]
    return a - a.sum(axis=0)[None, :] / m - a.sum(axis=1)[:, None] / m + 2.0 / m**2


def _affine_project(x):
    # same projection for a table of arbitrary total mass
    m = x.shape[0]
    return (x - (x.sum(axis=0)[None, :] - 1.0 / m) / m - (x.sum(axis=1)[:, None] - 1.0 / m) / m
            + (x.sum() - 1.0) / m**2)


def margin_constraints(m):
    """Equality normals (as columns) and right-hand sides.

    All m row sums and the first m-1 column sums; the last column sum is
    implied by the others.
    """
    n = m * m
    rows = np.zeros((n, m))
    cols = np.zeros((n, m - 1))
    idx = np.arange(n).reshape(m, m)
    for i in range(m):
        rows[idx[i, :], i] = 1.0
    for j in range(m - 1):
        cols[idx[:, j], j] = 1.0
    return np.hstack([rows, cols]), np.full(2 * m - 1, 1.0 / m)


def qp_project(a, max_iter=None):
    """Closest nonnegative table with uniform margins in squared error.

    Parameters
    ----------
    a : ContingencyTable or array_like, shape (m, m)
        Input table summing to one.
    max_iter : int, optional
        Cap on active-set changes, default ``50 * m**2``.

    Returns
    -------
    ProjectedTable

    Raises
    ------
    ProjectionError
        If the iteration cap is reached or the dual step is unbounded.
    """
    a = _table(a)
    m = a.shape[0]
    if abs(a.sum() - 1.0) > 1e-9:
        raise ValueError(f"table must sum to 1, got {a.sum()!r}")
    n = m * m
    if max_iter is None:
        max_iter = 50 * n
    if m == 1:
        return ProjectedTable(np.ones((1, 1)), float((1.0 - a[0, 0]) ** 2), 0, 0)

    # equality-constrained start: x = a + N u
    neq, beq = margin_constraints(m)
    x = lagrange_project(a).ravel()
    Q, R = linalg.qr(neq, mode="full")
    u = linalg.solve_triangular(R[: neq.shape[1]], Q[:, : neq.shape[1]].T @ (x - a.ravel()))
    n_eq = neq.shape[1]
    # active[k] is -1 for an equality, else the index of the bounded variable
    active = [-1] * n_eq
    is_active = np.zeros(n, dtype=bool)
    iterations = 0

    while True:
        free = np.where(is_active, np.inf, x)
        p = int(np.argmin(free))
        if free[p] >= -ZERO_TOL:
            break
        u_plus = 0.0
        while True:
            iterations += 1
            if iterations > max_iter:
                raise ProjectionError(f"no convergence within {max_iter} active-set changes")
            q = len(active)
            qp_row = Q[p]
            z = Q[:, q:] @ qp_row[q:]
            r = linalg.solve_triangular(R[:q, :q], qp_row[:q]) if q else np.empty(0)
            # dual step: only bound multipliers must stay nonnegative
            t1, drop = np.inf, -1
            for k in range(n_eq, q):
                if r[k] > DUAL_TOL:
                    ratio = u[k] / r[k]
                    if ratio < t1:
                        t1, drop = ratio, k
            zn = z[p]
            t2 = -x[p] / zn if zn > 1e-14 else np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                raise ProjectionError("QP appears infeasible")
            if np.isfinite(t2):
                x = x + t * z
            u = u - t * r
            u_plus += t
            if t == t2:
                Q, R = linalg.qr_insert(Q, R, np.eye(n)[:, p], q, which="col")
                active.append(p)
                u = np.append(u, u_plus)
                is_active[p] = True
                break
            # partial step: drop the blocking bound and retry
            Q, R = linalg.qr_delete(Q, R, drop, which="col")
            is_active[active[drop]] = False
            del active[drop]
            u = np.delete(u, drop)

    bounds = [k for k in active if k >= 0]
    x[bounds] = 0.0
    x[(x < 0) & (x >= -ZERO_TOL)] = 0.0
    x = x.reshape(m, m)
    return ProjectedTable(x, float(np.sum((x - a) ** 2)), len(bounds), iterations, tuple(sorted(bounds)))


def clipped_lagrange(a, max_iter=200_000):
    """Feasible benchmark built from the Lagrange correction alone.

    Negative entries are clipped and the closed-form margin correction is
    reapplied until the corrected table is nonnegative (alternating
    projections). The result lies in the feasible set of :func:`qp_project`
    but is in general not the closest such table.
    """
    x = lagrange_project(a)
    for _ in range(max_iter):
        if x.min() >= -ZERO_TOL:
            return np.where(x < 0, 0.0, x)
        x = _affine_project(np.clip(x, 0.0, None))
    raise ProjectionError("alternating clip/correct did not reach feasibility")
