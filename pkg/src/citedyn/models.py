"""Citation-count models evaluated on a yearly grid.

Four models are provided: the closed-form WSB curve (preferential attachment,
fitness and lognormal aging), the SIR contact process, an ARIMA forecaster
(see :mod:`citedyn.arima`) and the naive no-new-citations null model.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np
from numba import njit

DEFAULT_M = 30.0
DEFAULT_I0 = 1.0
DEFAULT_SIR_STEP = 0.01

_SQRT2 = math.sqrt(2.0)


class IntegrationError(RuntimeError):
    """Raised when the SIR state leaves the finite range."""


@dataclass(frozen=True)
class WsbParams:
    lam: float
    mu: float
    sigma: float
    m: float = DEFAULT_M

    def __post_init__(self):
        if not (self.lam > 0 and self.sigma > 0 and self.m > 0):
            raise ValueError(f"invalid WSB parameters: {self}")


@dataclass(frozen=True)
class SirParams:
    s0: float
    beta: float
    gamma: float
    i0: float = DEFAULT_I0

    def __post_init__(self):
        if not (self.s0 > 0 and self.beta > 0 and self.gamma > 0 and self.i0 > 0):
            raise ValueError(f"invalid SIR parameters: {self}")

    @property
    def n(self) -> float:
        return self.s0 + self.i0


@dataclass(frozen=True)
class ArimaParams:
    p: int
    d: int
    q: int
    ar_coeffs: tuple = ()
    ma_coeffs: tuple = ()
    intercept: float = 0.0
    sigma2: float = 0.0

    def __post_init__(self):
        if min(self.p, self.d, self.q) < 0:
            raise ValueError("ARIMA orders must be non-negative")
        if len(self.ar_coeffs) != self.p or len(self.ma_coeffs) != self.q:
            raise ValueError("coefficient count does not match orders")


@dataclass(frozen=True)
class NaiveParams:
    c_train: float

    def __post_init__(self):
        if self.c_train < 0:
            raise ValueError("c_train must be non-negative")


ModelParams = Union[WsbParams, SirParams, ArimaParams, NaiveParams]

MODEL_TAGS = ("wsb", "sir", "arima", "naive")
_PARAM_TYPES = {"wsb": WsbParams, "sir": SirParams, "arima": ArimaParams, "naive": NaiveParams}
_TAG_OF = {v: k for k, v in _PARAM_TYPES.items()}


def model_tag(params: ModelParams) -> str:
    return _TAG_OF[type(params)]


def params_to_json(params: ModelParams) -> dict:
    body = asdict(params)
    for key in ("ar_coeffs", "ma_coeffs"):
        if key in body:
            body[key] = [float(v) for v in body[key]]
    return {"model": model_tag(params), "params": body}


def params_from_json(doc: dict) -> ModelParams:
    cls = _PARAM_TYPES[doc["model"]]
    body = dict(doc["params"])
    for key in ("ar_coeffs", "ma_coeffs"):
        if key in body:
            body[key] = tuple(body[key])
    return cls(**body)


# ---------------------------------------------------------------- WSB

@njit(cache=True)
def norm_cdf(x):
    # erfc form keeps full relative accuracy in the lower tail
    return 0.5 * math.erfc(-x / 1.4142135623730951)


@njit(cache=True)
def _wsb_kernel(lam, mu, sigma, m, t, out):
    for k in range(t.shape[0]):
        z = (math.log(t[k]) - mu) / sigma
        out[k] = m * math.expm1(lam * norm_cdf(z))


def wsb_counts(params: WsbParams, t_grid) -> np.ndarray:
    """Cumulative WSB citations at each ``t > 0``."""
    t = np.atleast_1d(np.asarray(t_grid, dtype=np.float64))
    if np.any(~(t > 0)):
        raise ValueError("WSB counts are only defined for t > 0")
    out = np.empty_like(t)
    _wsb_kernel(params.lam, params.mu, params.sigma, params.m, t, out)
    return out


# ---------------------------------------------------------------- SIR

@njit(cache=True)
def _rk4_step(s, i, r, h, beta, gamma, n):
    b = beta / n
    f1 = b * s * i
    k1s, k1i = -f1, f1 - gamma * i
    s2, i2 = s + 0.5 * h * k1s, i + 0.5 * h * k1i
    f2 = b * s2 * i2
    k2s, k2i = -f2, f2 - gamma * i2
    s3, i3 = s + 0.5 * h * k2s, i + 0.5 * h * k2i
    f3 = b * s3 * i3
    k3s, k3i = -f3, f3 - gamma * i3
    s4, i4 = s + h * k3s, i + h * k3i
    f4 = b * s4 * i4
    k4s, k4i = -f4, f4 - gamma * i4
    s1 = s + h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
    i1 = i + h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i)
    # dR/dt = gamma * I, integrated with the same stages
    r1 = r + h / 6.0 * gamma * (i + 2.0 * i2 + 2.0 * i3 + i4)
    return s1, i1, r1


@njit(cache=True)
def _sir_trajectory(s0, i0, beta, gamma, step, n_steps, last_step):
    n = s0 + i0
    out = np.empty((n_steps + 1, 4))
    s, i, r, t = s0, i0, 0.0, 0.0
    out[0, 0] = t
    out[0, 1] = s
    out[0, 2] = i
    out[0, 3] = r
    for k in range(1, n_steps + 1):
        h = last_step if k == n_steps else step
        s, i, r = _rk4_step(s, i, r, h, beta, gamma, n)
        t = step * k if k < n_steps else t + h
        out[k, 0] = t
        out[k, 1] = s
        out[k, 2] = i
        out[k, 3] = r
    return out


@njit(cache=True)
def sir_susceptible_at(s0, i0, beta, gamma, step, times, out):
    """S(t) at ascending ``times`` by fixed-step RK4 plus a partial final step."""
    n = s0 + i0
    s, i, r = s0, i0, 0.0
    t_grid = 0.0
    k = 0
    for j in range(times.shape[0]):
        target = times[j]
        # integer step count avoids drift from repeated float addition
        n_full = int(math.floor(target / step + 1e-9))
        while k < n_full:
            s, i, r = _rk4_step(s, i, r, step, beta, gamma, n)
            k += 1
        t_grid = k * step
        rem = target - t_grid
        if rem > 1e-12:
            s_part, i_part, r_part = _rk4_step(s, i, r, rem, beta, gamma, n)
            out[j] = s_part
        else:
            out[j] = s
        if not (math.isfinite(s) and math.isfinite(i)):
            for jj in range(j, times.shape[0]):
                out[jj] = math.nan
            return


@dataclass
class SirTrajectory:
    """RK4 trajectory: every step in ``t, s, i, r``; integer years via :meth:`yearly`."""

    t: np.ndarray
    s: np.ndarray
    i: np.ndarray
    r: np.ndarray
    step: float = field(default=DEFAULT_SIR_STEP)

    def yearly(self) -> "SirTrajectory":
        per_year = round(1.0 / self.step)
        if abs(per_year * self.step - 1.0) > 1e-9:
            raise ValueError("integer-year sampling needs a step dividing one year")
        idx = np.arange(0, len(self.t), per_year)
        return SirTrajectory(self.t[idx], self.s[idx], self.i[idx], self.r[idx], 1.0)


def sir_integrate(params: SirParams, horizon: float, step: float = DEFAULT_SIR_STEP) -> SirTrajectory:
    """Classic fixed-step RK4 for the SIR system, recovered count tracked alongside."""
    if not step > 0 or not horizon >= step:
        raise ValueError("need step > 0 and horizon >= step")
    n_steps = int(math.ceil(horizon / step - 1e-9))
    last = horizon - (n_steps - 1) * step
    traj = _sir_trajectory(params.s0, params.i0, params.beta, params.gamma, step, n_steps, last)
    if not np.all(np.isfinite(traj)):
        raise IntegrationError(f"non-finite SIR state for {params}")
    return SirTrajectory(traj[:, 0], traj[:, 1], traj[:, 2], traj[:, 3], step)


def sir_counts(params: SirParams, t_grid, step: float = DEFAULT_SIR_STEP) -> np.ndarray:
    """Citations S(0) - S(t) at each ``t >= 0`` (any order)."""
    t = np.atleast_1d(np.asarray(t_grid, dtype=np.float64))
    if np.any(~(t >= 0)):
        raise ValueError("SIR counts need t >= 0")
    order = np.argsort(t, kind="stable")
    s = np.empty_like(t)
    sir_susceptible_at(params.s0, params.i0, params.beta, params.gamma, step, t[order].copy(), s)
    if not np.all(np.isfinite(s)):
        raise IntegrationError(f"non-finite SIR state for {params}")
    out = np.empty_like(t)
    out[order] = params.s0 - s
    return out


def sir_final_size(params: SirParams, tol: float = 1e-13) -> float:
    """S(infinity) from ln(S/S0) = R0 (S - N)/N, solved by bisection."""
    r0 = params.beta / params.gamma
    n = params.n

    def g(s):
        return math.log(s / params.s0) - r0 * (s - n) / n

    # g(0+) = -inf and g(s0) = r0*i0/n > 0: exactly one root in between
    lo, hi = 1e-300, params.s0
    while hi - lo > tol * params.s0:
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------- naive

def naive_counts(params: NaiveParams, t_grid) -> np.ndarray:
    """No new citations after training: the count stays at ``c_train``."""
    t = np.atleast_1d(np.asarray(t_grid, dtype=np.float64))
    return np.full(t.shape, float(params.c_train))
