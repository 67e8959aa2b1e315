"""ARIMA(p, d, q) on cumulative counts, estimated by conditional sum of squares.

The differenced series ``w`` follows
``w[t] = c + sum(ar[i] * w[t-1-i]) + e[t] + sum(ma[j] * e[t-1-j])`` with
pre-sample innovations set to zero.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .models import ArimaParams
from .optimize import minimize

log = logging.getLogger(__name__)

ORDER_GRID = tuple(itertools.product((0, 1, 2), (1, 2), (0, 1, 2)))  # (p, d, q)
CAUSAL_MARGIN = 1.001
_SIGMA2_FLOOR = 1e-12


@dataclass
class ArimaFit:
    params: ArimaParams
    sse: float
    aic: float
    converged: bool
    n_evals: int
    fallback: bool = False


@njit(cache=True)
def _css_residuals(c, ar, ma, w):
    p, q = ar.shape[0], ma.shape[0]
    e = np.zeros(w.shape[0])
    for t in range(p, w.shape[0]):
        v = w[t] - c
        for i in range(p):
            v -= ar[i] * w[t - 1 - i]
        for j in range(q):
            if t - 1 - j >= 0:
                v -= ma[j] * e[t - 1 - j]
        e[t] = v
    return e


@njit(cache=True)
def _css_objective(x, t, w, extra):
    p = int(extra[0])
    q = int(extra[1])
    e = _css_residuals(x[0], x[1 : 1 + p], x[1 + p : 1 + p + q], w)
    acc = 0.0
    for k in range(p, w.shape[0]):
        acc += e[k] * e[k]
    if not math.isfinite(acc):
        return 1e300
    return acc


def is_causal(ar_coeffs) -> bool:
    """All roots of 1 - ar1 z - ... - arp z^p lie outside the margin circle."""
    ar = np.asarray(ar_coeffs, dtype=float)
    if ar.size == 0 or not np.any(ar):
        return True
    poly = np.r_[-ar[::-1], 1.0]  # highest degree first for np.roots
    roots = np.roots(np.trim_zeros(poly, "f"))
    return bool(np.all(np.abs(roots) > CAUSAL_MARGIN))


def is_invertible(ma_coeffs) -> bool:
    """All roots of 1 + ma1 z + ... + maq z^q lie outside the margin circle."""
    return is_causal(-np.asarray(ma_coeffs, dtype=float))


def _ols_ar(w, p):
    rows = len(w) - p
    design = np.ones((rows, p + 1))
    for i in range(p):
        design[:, 1 + i] = w[p - 1 - i : len(w) - 1 - i]
    coef, *_ = np.linalg.lstsq(design, w[p:], rcond=None)
    return coef


def _fit_order(series, p, d, q):
    w = np.diff(series, n=d) if d else np.asarray(series, dtype=float)
    coef = _ols_ar(w, p)
    n_evals, converged = 0, True
    if q > 0:
        x0 = np.r_[coef, np.zeros(q)]
        x, _, _, n_evals, converged = minimize(
            _css_objective, x0, np.zeros(1), w, np.array([p, q], dtype=float), step=0.1, xtol=1e-8
        )
        coef = x
    params_vec = np.asarray(coef, dtype=float)
    c, ar, ma = params_vec[0], params_vec[1 : 1 + p], params_vec[1 + p : 1 + p + q]
    e = _css_residuals(c, ar, ma, w)
    n_eff = len(w) - p
    sse = float(np.sum(e[p:] ** 2))
    sigma2 = sse / n_eff
    aic = n_eff * math.log(max(sigma2, _SIGMA2_FLOOR)) + 2 * (p + q + 1)
    params = ArimaParams(p, d, q, tuple(map(float, ar)), tuple(map(float, ma)), float(c), sigma2)
    return ArimaFit(params, sse, aic, bool(converged), int(n_evals))


def _random_walk(series) -> ArimaFit:
    w = np.diff(series)
    c = float(np.mean(w))
    sse = float(np.sum((w - c) ** 2))
    sigma2 = sse / len(w)
    aic = len(w) * math.log(max(sigma2, _SIGMA2_FLOOR)) + 2
    return ArimaFit(ArimaParams(0, 1, 0, (), (), c, sigma2), sse, aic, True, 0, fallback=True)


def fit(series, orders=None) -> ArimaFit:
    """CSS fit for given ``(p, d, q)`` or AIC selection over :data:`ORDER_GRID`.

    Non-causal (and non-invertible) candidates are rejected; if nothing
    survives the model falls back to a random walk with drift.
    """
    y = np.asarray(series, dtype=np.float64)
    candidates = [tuple(orders)] if orders is not None else ORDER_GRID
    best = None
    for p, d, q in candidates:
        if len(y) < p + d + q + 2:
            if orders is not None:
                raise ValueError(f"series of length {len(y)} too short for order {(p, d, q)}")
            continue
        cand = _fit_order(y, p, d, q)
        if not is_causal(cand.params.ar_coeffs):
            log.debug("rejecting non-causal ARIMA%s", (p, d, q))
            continue
        if not is_invertible(cand.params.ma_coeffs):
            # CSS residual recursion diverges for such fits
            log.debug("rejecting non-invertible ARIMA%s", (p, d, q))
            continue
        # ties go to the earlier (simpler) grid entry
        if best is None or cand.aic < best.aic - 1e-9:
            best = cand
    if best is None:
        if len(y) < 2:
            raise ValueError("series too short for ARIMA")
        best = _random_walk(y)
    return best


def _differences(series, d):
    """Last value of each differencing level 0..d-1 and the d-th difference."""
    levels = [np.asarray(series, dtype=float)]
    for _ in range(d):
        levels.append(np.diff(levels[-1]))
    return levels


def residuals(params: ArimaParams, series) -> np.ndarray:
    levels = _differences(series, params.d)
    w = levels[-1]
    return _css_residuals(
        params.intercept, np.asarray(params.ar_coeffs, float), np.asarray(params.ma_coeffs, float), w
    )


def fitted_values(params: ArimaParams, series) -> np.ndarray:
    """In-sample one-step predictions on the level scale (``y - e``)."""
    y = np.asarray(series, dtype=float)
    e = residuals(params, y)
    out = y.copy()
    out[params.d :] -= e
    return out


def forecast(params: ArimaParams, series, steps_ahead: int, clamp: bool = True) -> np.ndarray:
    """Iterate the difference equation with zero future innovations, then integrate."""
    if steps_ahead <= 0:
        return np.zeros(0)
    levels = _differences(series, params.d)
    w = list(levels[-1])
    e = list(residuals(params, series))
    ar, ma = params.ar_coeffs, params.ma_coeffs
    lasts = [lvl[-1] for lvl in levels[:-1]]
    out = np.empty(steps_ahead)
    for h in range(steps_ahead):
        nxt = params.intercept
        for i, a in enumerate(ar):
            nxt += a * w[-1 - i]
        for j, b in enumerate(ma):
            if j < len(e):
                nxt += b * e[-1 - j]
        w.append(nxt)
        e.append(0.0)
        val = nxt
        for lvl in range(params.d - 1, -1, -1):
            lasts[lvl] = lasts[lvl] + val
            val = lasts[lvl]
        out[h] = val
    if clamp:
        out = np.maximum.accumulate(np.r_[float(np.asarray(series)[-1]), out])[1:]
    return out


def arima_fit_forecast(series, orders=None, steps_ahead: int = 0):
    """Fit then forecast ``steps_ahead`` values past the end of ``series``."""
    res = fit(series, orders)
    return res.params, forecast(res.params, series, steps_ahead)
