"""Vectorized safeguarded root finding for monotone conditional cdfs."""

import numpy as np


class RootFindingError(ArithmeticError):
    """Raised when an inverse h-function fails to converge."""


def invert_increasing(func, dfunc, target, args=(), lo=0.0, hi=1.0,
                      coarse_width=1e-3, tol=1e-9, max_iter=200):
    """Solve ``func(x, *args) = target`` elementwise for increasing ``func``.

    Bisection narrows every bracket to ``coarse_width``, then Newton steps
    using ``dfunc`` take over. A Newton step leaving the current bracket is
    replaced by a bisection step.

    Parameters
    ----------
    func, dfunc : callable
        ``func(x, *args)`` and its derivative in ``x``; both receive 1-d
        arrays of the active elements only.
    target : array_like
        Right-hand side values.
    args : tuple of array_like
        Extra arguments broadcast against ``target``.

    Returns
    -------
    x : ndarray
        Roots with the broadcast shape of ``target`` and ``args``.

    Raises
    ------
    RootFindingError
        If any element has not converged after ``max_iter`` iterations.
    """
    arrays = np.broadcast_arrays(np.asarray(target, dtype=float),
                                 *[np.asarray(a, dtype=float) for a in args])
    shape = arrays[0].shape
    w = arrays[0].ravel()
    extra = [a.ravel() for a in arrays[1:]]
    size = w.size
    lo_arr = np.full(size, lo, dtype=float)
    hi_arr = np.full(size, hi, dtype=float)
    x = np.empty(size)
    if size == 0:
        return x.reshape(shape)

    n_bisect = max(0, int(np.ceil(np.log2((hi - lo) / coarse_width))))
    for _ in range(n_bisect):
        mid = 0.5 * (lo_arr + hi_arr)
        below = func(mid, *extra) < w
        lo_arr = np.where(below, mid, lo_arr)
        hi_arr = np.where(below, hi_arr, mid)
    x[:] = 0.5 * (lo_arr + hi_arr)

    active = np.arange(size)
    for _ in range(max_iter - n_bisect):
        xa = x[active]
        sub = [e[active] for e in extra]
        resid = func(xa, *sub) - w[active]
        la, ha = lo_arr[active], hi_arr[active]
        la = np.where(resid < 0, xa, la)
        ha = np.where(resid > 0, xa, ha)
        lo_arr[active], hi_arr[active] = la, ha
        done = (resid == 0.0) | (ha - la <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(xa)))
        with np.errstate(divide="ignore", invalid="ignore"):
            step = resid / dfunc(xa, *sub)
            xn = xa - step
        bad = ~np.isfinite(xn) | (xn <= la) | (xn >= ha)
        xn = np.where(bad, 0.5 * (la + ha), xn)
        small = ~bad & (np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(xa)))
        x[active] = np.where(done, xa, xn)
        keep = ~(done | small)
        active = active[keep]
        if active.size == 0:
            break

    if active.size:
        xa = x[active]
        resid = np.abs(func(xa, *[e[active] for e in extra]) - w[active])
        failed = ~(resid <= tol)
        if np.any(failed):
            raise RootFindingError(
                f"{int(failed.sum())} of {size} roots did not converge in {max_iter} iterations"
            )
    return x.reshape(shape)
