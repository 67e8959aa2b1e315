"""Least-squares fitting of the citation models to a paper's cumulative counts."""

from __future__ import annotations

import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import arima
from .citation_data import CitationHistory
from .models import (
    DEFAULT_I0,
    DEFAULT_M,
    DEFAULT_SIR_STEP,
    ArimaParams,
    ModelParams,
    NaiveParams,
    SirParams,
    WsbParams,
    norm_cdf,
    naive_counts,
    params_to_json,
    sir_counts,
    sir_susceptible_at,
    wsb_counts,
)
from .optimize import BIG, nelder_mead

log = logging.getLogger(__name__)

# log-space box; beyond it the objective is flat-huge
_LOG_BOUND = 25.0

WSB_LAMBDA_STARTS = (0.5, 1.0, 2.0, 4.0)
WSB_MU_STARTS = (math.log(1.0), math.log(3.0), math.log(8.0), math.log(20.0))
WSB_SIGMA_STARTS = (0.5, 1.0, 2.0)
SIR_S0_FACTORS = (1.0, 2.0, 5.0, 10.0)
SIR_BETA_STARTS = (0.5, 1.0, 2.0)
SIR_GAMMA_STARTS = (0.1, 0.5, 1.0)


@dataclass(frozen=True)
class FitConfig:
    window: tuple = (1, 50)
    objective: str = "sse"
    optimizer: str = "nelder-mead-multistart"
    n_starts: int = 16
    max_iters: int = 2000
    tol: float = 1e-8
    m: float = DEFAULT_M
    i0: float = DEFAULT_I0
    sir_step: float = DEFAULT_SIR_STEP
    screen_tol: float = 1e-2
    screen_iters: int = 200
    sir_screen_step: float = 0.2
    arima_orders: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        t_min, t_max = self.window
        if not (1 <= t_min < t_max):
            raise ValueError(f"invalid window {self.window}")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")


@dataclass
class FitResult:
    paper_id: str
    model: str
    params: ModelParams
    objective_value: float
    converged: bool
    n_evals: int
    window: tuple = (1, 50)
    start_objectives: list = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "model": self.model,
            **params_to_json(self.params),
            "objective": float(self.objective_value),
            "converged": bool(self.converged),
            "n_evals": int(self.n_evals),
            "window": list(self.window),
        }


# ------------------------------------------------------------ objectives

@njit(cache=True)
def _wsb_sse(x, log_t, c, extra):
    # takes ln t, not t: the logs are computed once per fit
    if abs(x[0]) > _LOG_BOUND or abs(x[1]) > _LOG_BOUND or abs(x[2]) > _LOG_BOUND:
        return BIG
    lam, mu, inv_sigma, m = math.exp(x[0]), x[1], math.exp(-x[2]), extra[0]
    acc = 0.0
    for k in range(log_t.shape[0]):
        d = c[k] - m * math.expm1(lam * norm_cdf((log_t[k] - mu) * inv_sigma))
        acc += d * d
    return acc


@njit(cache=True)
def _sir_sse(x, t, c, extra):
    if abs(x[0]) > _LOG_BOUND or abs(x[1]) > 10.0 or abs(x[2]) > 10.0:
        return BIG
    s0 = math.exp(x[0])
    s = np.empty(t.shape[0])
    sir_susceptible_at(s0, extra[0], math.exp(x[1]), math.exp(x[2]), extra[1], t, s)
    acc = 0.0
    for k in range(t.shape[0]):
        d = c[k] - (s0 - s[k])
        acc += d * d
    if not math.isfinite(acc):
        return BIG
    return acc


def _window_data(history: CitationHistory, window) -> tuple[np.ndarray, np.ndarray]:
    t_min, t_max = window
    if t_max > history.horizon:
        raise ValueError(f"window {window} exceeds history horizon {history.horizon}")
    t = np.arange(t_min, t_max + 1, dtype=np.float64)
    return t, np.asarray(history.counts[t_min : t_max + 1], dtype=np.float64)


def _draw_starts(grid: list, n_starts: int, rng: np.random.Generator) -> list:
    if n_starts >= len(grid):
        return list(grid)
    idx = rng.choice(len(grid), size=n_starts, replace=False)
    return [grid[i] for i in sorted(idx)]


def _multistart(objective, starts, t, c, extra, step, config: FitConfig, extra_coarse=None):
    """Screen every start loosely, polish the best, then refine it.

    ``extra_coarse`` lets an expensive objective (SIR) screen and pre-polish
    with a cheaper setting; the last refinement always uses ``extra``.
    """
    if extra_coarse is None:
        extra_coarse = extra
    best_x, best_f, total_evals = None, math.inf, 0
    start_objs = []
    for x0 in starts:
        x0 = np.asarray(x0, dtype=np.float64)
        start_objs.append(float(objective(x0, t, c, extra)))
        x, fx, _, nev, _ = nelder_mead(
            objective, x0, t, c, extra_coarse, step, config.screen_tol, min(config.screen_iters, config.max_iters)
        )
        total_evals += nev
        if fx < best_f:
            best_x, best_f = x, fx
    x, fx, _, nev, _ = nelder_mead(
        objective, best_x, t, c, extra_coarse, step * 0.1, config.tol, config.max_iters
    )
    total_evals += nev
    # restart from a small fresh simplex: guards against premature collapse
    # and moves the optimum onto the fine objective when screening was coarse
    x, fx, _, nev, converged = nelder_mead(
        objective, x, t, c, extra, np.full(len(x), 1e-3), config.tol, config.max_iters
    )
    total_evals += nev
    # never hand back something worse than a starting point
    k = int(np.argmin(start_objs))
    if start_objs[k] < fx:
        x, fx = np.asarray(starts[k], dtype=np.float64), start_objs[k]
    return x, float(fx), bool(converged), total_evals, start_objs


def _fit_wsb(history, config: FitConfig, rng) -> tuple:
    t, c = _window_data(history, config.window)
    grid = [
        (math.log(lam), mu, math.log(sig))
        for lam, mu, sig in itertools.product(WSB_LAMBDA_STARTS, WSB_MU_STARTS, WSB_SIGMA_STARTS)
    ]
    starts = _draw_starts(grid, config.n_starts, rng)
    extra = np.array([config.m])
    step = np.array([0.2, 0.2, 0.2])
    x, fx, conv, nev, s_obj = _multistart(_wsb_sse, starts, np.log(t), c, extra, step, config)
    params = WsbParams(math.exp(x[0]), float(x[1]), math.exp(x[2]), config.m)
    return params, fx, conv, nev, s_obj


def _fit_sir(history, config: FitConfig, rng) -> tuple:
    t, c = _window_data(history, config.window)
    c_end = max(float(c[-1]), 1.0)
    grid = [
        (math.log(f * c_end), math.log(b), math.log(g))
        for f, b, g in itertools.product(SIR_S0_FACTORS, SIR_BETA_STARTS, SIR_GAMMA_STARTS)
    ]
    starts = _draw_starts(grid, config.n_starts, rng)
    extra = np.array([config.i0, config.sir_step])
    coarse = np.array([config.i0, max(config.sir_step, config.sir_screen_step)])
    step = np.array([0.2, 0.2, 0.2])
    x, fx, conv, nev, s_obj = _multistart(_sir_sse, starts, t, c, extra, step, config, coarse)
    params = SirParams(math.exp(x[0]), math.exp(x[1]), math.exp(x[2]), config.i0)
    return params, fx, conv, nev, s_obj


def _fit_naive(history, config: FitConfig, rng) -> tuple:
    t, c = _window_data(history, config.window)
    params = NaiveParams(float(c[-1]))
    obj = float(np.sum((c - params.c_train) ** 2))
    return params, obj, True, 0, []


def _fit_arima(history, config: FitConfig, rng) -> tuple:
    t, c = _window_data(history, config.window)
    fit = arima.fit(c, orders=config.arima_orders)
    return fit.params, fit.sse, fit.converged, fit.n_evals, []


_FITTERS = {"wsb": _fit_wsb, "sir": _fit_sir, "naive": _fit_naive, "arima": _fit_arima}


def paper_rng(seed: int, index: int, model: str) -> np.random.Generator:
    """Per-(paper, model) generator so results do not depend on scheduling."""
    return np.random.default_rng([int(seed), int(index), "wsb sir arima naive".split().index(model)])


def fit_model(history: CitationHistory, model: str, config: FitConfig = FitConfig(), rng=None) -> FitResult:
    """Fit one model to one history over ``config.window``.

    Never raises on optimizer trouble: a failed fit comes back with
    ``converged=False`` and the best parameters seen.
    """
    if model not in _FITTERS:
        raise ValueError(f"unknown model {model!r}")
    if rng is None:
        rng = paper_rng(config.seed, 0, model)
    t, c = _window_data(history, config.window)
    if model in ("wsb", "sir") and not np.any(c > 0):
        raise ValueError(f"{history.paper_id}: no citations inside window {config.window}")
    params, obj, conv, nev, s_obj = _FITTERS[model](history, config, rng)
    return FitResult(history.paper_id, model, params, obj, conv, nev, tuple(config.window), s_obj)


def _fit_chunk(args):
    histories, offset, models, config = args
    out = []
    for k, h in enumerate(histories):
        for model in models:
            rng = paper_rng(config.seed, offset + k, model)
            try:
                out.append(fit_model(h, model, config, rng))
            except (ValueError, FloatingPointError, ArithmeticError) as exc:
                log.warning("fit %s/%s failed: %s", h.paper_id, model, exc)
                out.append(_failed(h, model, config))
    return out


def _failed(history, model, config) -> FitResult:
    t, c = _window_data(history, config.window)
    params = NaiveParams(float(c[-1]))
    return FitResult(history.paper_id, model, params, math.inf, False, 0, tuple(config.window))


def fit_cohort(histories, models, config: FitConfig = FitConfig(), n_jobs: int = 1, chunk_size: int = 64):
    """Fit every (paper, model) pair; output order is papers then ``models``.

    Each pair draws its multistart points from ``paper_rng(seed, index, model)``,
    so serial and parallel runs give identical results.
    """
    histories = list(histories)
    if not histories:
        raise ValueError("empty cohort")
    models = list(models)
    chunks = [
        (histories[i : i + chunk_size], i, models, config) for i in range(0, len(histories), chunk_size)
    ]
    if n_jobs == -1:
        n_jobs = os.cpu_count() or 1
    if n_jobs <= 1 or len(chunks) == 1:
        parts = map(_fit_chunk, chunks)
        results = [r for part in parts for r in part]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = [r for part in pool.map(_fit_chunk, chunks) for r in part]
    failed = sum(not r.converged for r in results)
    log.info("fitted %d papers x %d models, %d not converged", len(histories), len(models), failed)
    return results


def predict(result: FitResult, history: CitationHistory, t_grid) -> np.ndarray:
    """Model counts on integer ``t_grid`` (t = 0 allowed) for a finished fit.

    WSB at t = 0 takes its limit 0. ARIMA returns in-sample one-step fits
    inside the window and the forecast beyond it.
    """
    t = np.asarray(t_grid, dtype=np.float64)
    params = result.params
    if isinstance(params, WsbParams):
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = wsb_counts(params, t[pos])
        return out
    if isinstance(params, SirParams):
        return sir_counts(params, t)
    if isinstance(params, NaiveParams):
        return naive_counts(params, t)
    if isinstance(params, ArimaParams):
        t_min, t_max = result.window
        series = np.asarray(history.counts[t_min : t_max + 1], dtype=np.float64)
        horizon = int(max(t.max(), t_max))
        fitted = arima.fitted_values(params, series)
        forecast = arima.forecast(params, series, max(horizon - t_max, 0))
        full = np.full(horizon + 1, np.nan)
        full[:t_min] = np.asarray(history.counts[:t_min], dtype=np.float64)
        full[t_min : t_max + 1] = fitted
        full[t_max + 1 :] = forecast
        return full[t.astype(int)]
    raise TypeError(f"unsupported params {type(params).__name__}")
