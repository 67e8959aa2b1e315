"""Compiled Nelder-Mead simplex minimizer shared by the model fitters.

The objective is any numba-jitted function with the signature
``f(x, t, c, extra) -> float``. Keeping the optimizer and the objective in
compiled code is what makes cohort-scale fitting affordable.
"""

import numpy as np
from numba import njit

BIG = 1e300


@njit(cache=True)
def _diameter(sim, best):
    # simplex size relative to the best vertex, infinity norm
    n = sim.shape[1]
    scale = 1.0
    for j in range(n):
        a = abs(sim[best, j])
        if a > scale:
            scale = a
    d = 0.0
    for k in range(sim.shape[0]):
        for j in range(n):
            v = abs(sim[k, j] - sim[best, j])
            if v > d:
                d = v
    return d / scale


@njit(cache=True)
def nelder_mead(f, x0, t, c, extra, step, xtol, max_iter):
    """Minimize ``f`` from ``x0``.

    Returns ``(x_best, f_best, n_iter, n_evals, converged)``. Convergence means
    the relative simplex diameter fell below ``xtol`` before ``max_iter``.
    """
    n = x0.shape[0]
    sim = np.empty((n + 1, n))
    fs = np.empty(n + 1)
    for k in range(n + 1):
        for j in range(n):
            sim[k, j] = x0[j]
        if k > 0:
            sim[k, k - 1] += step[k - 1]
    n_evals = 0
    for k in range(n + 1):
        v = f(sim[k], t, c, extra)
        fs[k] = v if np.isfinite(v) else BIG
        n_evals += 1

    centroid = np.empty(n)
    xr = np.empty(n)
    xe = np.empty(n)
    xc = np.empty(n)
    converged = False
    it = 0
    while it < max_iter:
        order = np.argsort(fs)
        sim = sim[order].copy()
        fs = fs[order].copy()
        if _diameter(sim, 0) < xtol:
            converged = True
            break
        it += 1

        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc += sim[k, j]
            centroid[j] = acc / n

        for j in range(n):
            xr[j] = 2.0 * centroid[j] - sim[n, j]
        fr = f(xr, t, c, extra)
        n_evals += 1
        if not np.isfinite(fr):
            fr = BIG

        if fr < fs[0]:
            for j in range(n):
                xe[j] = 3.0 * centroid[j] - 2.0 * sim[n, j]
            fe = f(xe, t, c, extra)
            n_evals += 1
            if not np.isfinite(fe):
                fe = BIG
            if fe < fr:
                sim[n, :] = xe
                fs[n] = fe
            else:
                sim[n, :] = xr
                fs[n] = fr
            continue
        if fr < fs[n - 1]:
            sim[n, :] = xr
            fs[n] = fr
            continue

        if fr < fs[n]:
            # outside contraction
            for j in range(n):
                xc[j] = 1.5 * centroid[j] - 0.5 * sim[n, j]
            fc = f(xc, t, c, extra)
            n_evals += 1
            if not np.isfinite(fc):
                fc = BIG
            accept = fc <= fr
        else:
            for j in range(n):
                xc[j] = 0.5 * centroid[j] + 0.5 * sim[n, j]
            fc = f(xc, t, c, extra)
            n_evals += 1
            if not np.isfinite(fc):
                fc = BIG
            accept = fc < fs[n]
        if accept:
            sim[n, :] = xc
            fs[n] = fc
            continue

        for k in range(1, n + 1):
            for j in range(n):
                sim[k, j] = sim[0, j] + 0.5 * (sim[k, j] - sim[0, j])
            v = f(sim[k], t, c, extra)
            fs[k] = v if np.isfinite(v) else BIG
            n_evals += 1

    best = np.argmin(fs)
    return sim[best].copy(), fs[best], it, n_evals, converged


def minimize(f, x0, t, c, extra=None, step=0.1, xtol=1e-8, max_iter=2000):
    """Python-side convenience wrapper around :func:`nelder_mead`."""
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if np.isscalar(step):
        step = np.full(x0.shape[0], float(step))
    if extra is None:
        extra = np.zeros(1)
    return nelder_mead(
        f,
        x0,
        np.ascontiguousarray(t, dtype=np.float64),
        np.ascontiguousarray(c, dtype=np.float64),
        np.ascontiguousarray(extra, dtype=np.float64),
        np.ascontiguousarray(step, dtype=np.float64),
        float(xtol),
        int(max_iter),
    )
