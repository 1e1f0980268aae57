"""Cyclic coordinate descent for L1-penalised weighted least squares.

Solves, for fixed IRLS weights ``w`` and working response ``z``::

    min_{b0, beta}  1/(2n) sum_i w_i (z_i - b0 - x_i . beta)^2 + lam * |beta|_1

``r`` holds the current residual ``z - b0 - X beta`` and is updated in place
together with ``beta`` and ``b0`` (a length-1 array).
"""
from __future__ import annotations

import numpy as np

from .. import _accel


def soft_threshold(z: float, gamma: float) -> float:
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


_soft_threshold_jit = _accel.njit(soft_threshold)


@_accel.njit
def _cd_numba(XT, w, r, beta, b0, xwx, lam, tol, max_sweeps):
    p, n = XT.shape
    sw = 0.0
    for i in range(n):
        sw += w[i]
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        s = 0.0
        for i in range(n):
            s += w[i] * r[i]
        delta = s / sw
        b0[0] += delta
        for i in range(n):
            r[i] -= delta
        max_change = abs(delta)
        for j in range(p):
            if xwx[j] <= 0.0:
                continue
            xj = XT[j]
            g = 0.0
            for i in range(n):
                g += w[i] * xj[i] * r[i]
            g = g / n + xwx[j] * beta[j]
            new = _soft_threshold_jit(g, lam) / xwx[j]
            d = new - beta[j]
            if d != 0.0:
                for i in range(n):
                    r[i] -= d * xj[i]
                beta[j] = new
                if abs(d) > max_change:
                    max_change = abs(d)
        if max_change < tol:
            return sweeps, True
    return sweeps, False


def _cd_numpy(XT, w, r, beta, b0, xwx, lam, tol, max_sweeps):
    p, n = XT.shape
    sw = w.sum()
    for sweeps in range(1, max_sweeps + 1):
        delta = np.dot(w, r) / sw
        b0[0] += delta
        r -= delta
        max_change = abs(delta)
        for j in range(p):
            if xwx[j] <= 0.0:
                continue
            xj = XT[j]
            g = np.dot(w * xj, r) / n + xwx[j] * beta[j]
            new = soft_threshold(g, lam) / xwx[j]
            d = new - beta[j]
            if d != 0.0:
                r -= d * xj
                beta[j] = new
                max_change = max(max_change, abs(d))
        if max_change < tol:
            return sweeps, True
    return max_sweeps, False


def cd_weighted_lasso(XT, w, r, beta, b0, xwx, lam, tol, max_sweeps):
    """Run sweeps until the largest coordinate change is below ``tol``.

    Returns ``(n_sweeps, converged)``. ``r``, ``beta`` and ``b0`` are
    modified in place.
    """
    fn = _cd_numba if _accel.backend() == "numba" else _cd_numpy
    sweeps, ok = fn(XT, w, r, beta, b0, xwx, float(lam), float(tol), int(max_sweeps))
    return int(sweeps), bool(ok)
