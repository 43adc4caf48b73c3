"""
Barma Forecast — posterior predictive simulation and accuracy.

For every posterior draw the historical errors r_t are recomputed with that
draw's own filter pass; the recursion then runs forward h steps, drawing
Y*_{n+k} ~ Beta(νμ, ν(1−μ)) and feeding g(Y*) and the simulated error
back in.  The point forecast is the predictive mean.

Future covariates must be supplied as deterministic rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from core.errors import DimensionError, DomainError, InsufficientDrawsError
from core.model import (
    CovariateMatrix,
    LinkFunction,
    ModelOrder,
    ObservationSeries,
    ParameterVector,
    filter_recursion,
    is_clamped,
)
from core.rng import RngStream, draw_beta
from runtime.chains import ChainDraws, pooled

logger = logging.getLogger("barma.forecast")


@dataclass
class ForecastResult:
    """Predictive draws (posterior draws × h) with per-horizon summaries."""
    draws: np.ndarray
    means: np.ndarray
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    actuals: Optional[np.ndarray] = None
    abs_errors: Optional[np.ndarray] = None
    mae: Optional[np.ndarray] = None

    @property
    def horizon(self) -> int:
        return int(self.draws.shape[1])

    def to_frame(self) -> pd.DataFrame:
        frame = forecast_summary(self, self.level)
        if self.actuals is not None:
            frame["actual"] = self.actuals
            frame["abs_error"] = self.abs_errors
            frame["mae"] = self.mae
        return frame


def _interval(draws: np.ndarray, level: float) -> tuple:
    tail = (1.0 - level) / 2.0
    return np.quantile(draws, tail, axis=0), np.quantile(draws, 1.0 - tail, axis=0)


def forecast_summary(result: ForecastResult, level: float = 0.95) -> pd.DataFrame:
    """Per-horizon predictive mean and equal-tailed interval."""
    if result.draws.size == 0:
        raise InsufficientDrawsError("forecast has no predictive draws")
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0,1), got {level!r}")
    lower, upper = _interval(result.draws, level)
    return pd.DataFrame({
        "horizon": np.arange(1, result.horizon + 1),
        "mean": result.draws.mean(axis=0),
        "lower": lower,
        "upper": upper,
    })


def absolute_errors(point_forecasts: Sequence[float], actuals: Sequence[float]) -> np.ndarray:
    point = np.asarray(point_forecasts, dtype=float)
    actual = np.asarray(actuals, dtype=float)
    if point.shape != actual.shape:
        raise DimensionError(f"{point.size} forecasts vs {actual.size} actuals")
    return np.abs(point - actual)


def mae(point_forecasts: Sequence[float], actuals: Sequence[float]) -> np.ndarray:
    """Cumulative MAE: entry k averages the first k absolute errors."""
    errors = absolute_errors(point_forecasts, actuals)
    return np.cumsum(errors) / np.arange(1, errors.size + 1)


def _select_draws(draws: np.ndarray, max_draws: int) -> np.ndarray:
    if max_draws and draws.shape[0] > max_draws:
        idx = np.unique(np.linspace(0, draws.shape[0] - 1, max_draws).round().astype(int))
        return draws[idx]
    return draws


def predictive_draws(
    chains: Sequence[ChainDraws],
    history: ObservationSeries,
    order: ModelOrder,
    link: LinkFunction,
    h: int,
    rng: RngStream,
    covariates: Optional[CovariateMatrix] = None,
    level: float = 0.95,
    actuals: Optional[Sequence[float]] = None,
    max_draws: int = 0,
) -> ForecastResult:
    """Simulate Y*_{n+1..n+h} once per posterior draw."""
    if h < 1:
        raise DomainError(f"horizon must be >= 1, got {h}")
    flat = _select_draws(pooled(chains), max_draws)
    if flat.shape[0] == 0:
        raise InsufficientDrawsError("no posterior draws to forecast from")
    n = len(history)
    if order.r:
        if covariates is None or covariates.future is None or covariates.future.shape[0] < h:
            raise DomainError(
                f"forecasting with {order.r} covariate(s) needs {h} future covariate rows"
            )
        X = np.vstack((covariates.values, covariates.future[:h]))
    else:
        covariates = CovariateMatrix.empty(n)
        X = np.zeros((n + h, 0))

    params = [ParameterVector.from_flat(row, order) for row in flat]
    S = len(params)
    nu = np.array([pv.nu for pv in params])
    alpha = np.array([pv.alpha for pv in params])
    beta = np.array([pv.beta for pv in params]).reshape(S, order.r)
    phi = np.array([pv.phi for pv in params]).reshape(S, order.p)
    theta = np.array([pv.theta for pv in params]).reshape(S, order.q)

    g = np.empty((S, n + h))
    r = np.empty((S, n + h))
    g[:, :n] = history.transformed(link)
    if order.q:
        for s, pv in enumerate(params):
            r[s, :n] = filter_recursion(pv, history, covariates, order, link).resid
    xb = beta @ X.T  # S × (n+h)

    sims = np.empty((S, h))
    means = np.empty((S, h))
    for k in range(h):
        t = n + k
        eta = alpha + xb[:, t]
        for i in range(1, order.p + 1):
            if t - i >= 0:
                eta = eta + phi[:, i - 1] * (g[:, t - i] - xb[:, t - i])
        for j in range(1, order.q + 1):
            if t - j >= 0:
                eta = eta + theta[:, j - 1] * r[:, t - j]
        mu = link.inverse(eta)
        y_new = draw_beta(mu, nu, rng)
        g_mu = np.where(is_clamped(mu), link.forward(mu), eta)
        g[:, t] = link.forward(y_new)
        r[:, t] = g[:, t] - g_mu
        sims[:, k] = y_new
        means[:, k] = mu

    lower, upper = _interval(sims, level)
    point = sims.mean(axis=0)
    result = ForecastResult(sims, means, point, lower, upper, level)
    if actuals is not None:
        given = np.asarray(actuals, dtype=float)[:h]
        m = given.size
        result.actuals = np.full(h, np.nan)
        result.abs_errors = np.full(h, np.nan)
        result.mae = np.full(h, np.nan)
        result.actuals[:m] = given
        result.abs_errors[:m] = absolute_errors(point[:m], given)
        result.mae[:m] = mae(point[:m], given)
    logger.info("Forecast %d step(s) from %d posterior draws", h, S)
    return result
