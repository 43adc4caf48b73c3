"""
Barma Simulate — forward simulation of βARMA series.

The mean recursion runs forward one step at a time, drawing
y_t ~ Beta(νμ_t, ν(1−μ_t)) and feeding g(y_t) and r_t back in.  Terms
before the first generated value are zero, exactly as in the filter, so
``filter_recursion`` on a series simulated with ``burn_in=0`` replays the
same μ_t sequence.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.errors import DimensionError, DivergenceError, DomainError
from core.model import (
    CovariateMatrix,
    LinkFunction,
    ModelOrder,
    ObservationSeries,
    ParameterVector,
    is_clamped,
)
from core.rng import RngStream, draw_beta

logger = logging.getLogger("barma.simulate")

DEFAULT_BURN_IN = 50
MAX_CLAMPED_RUN = 10

# Fitted values for the 190-month storage series. The application fixture
# has 196 values: 190 to fit and the last 6 held out as forecast actuals.
APPLICATION_PARAMS = ParameterVector(nu=11.7593, alpha=0.3452, phi=(0.5235,), theta=(0.3588,))
APPLICATION_LENGTH = 196
APPLICATION_HOLDOUT = 6


@dataclass
class SimulationResult:
    """Kept part of a simulated path: the series, its realized means and covariates."""
    series: ObservationSeries
    mu: np.ndarray
    covariates: Optional[CovariateMatrix] = None


def _design_matrix(covariates: Optional[CovariateMatrix], order: ModelOrder, total: int) -> np.ndarray:
    if order.r == 0:
        return np.zeros((total, 0))
    if covariates is None:
        raise DimensionError(f"order has r={order.r} covariates but none were supplied")
    if covariates.r != order.r or covariates.n != total:
        raise DimensionError(
            f"covariates are {covariates.n}x{covariates.r}, simulation needs {total}x{order.r} "
            "(burn-in rows included)"
        )
    return np.asarray(covariates.values)


def simulate_path(
    params: ParameterVector,
    order: ModelOrder,
    link: LinkFunction,
    n: int,
    rng: RngStream,
    burn_in: int = DEFAULT_BURN_IN,
    covariates: Optional[CovariateMatrix] = None,
) -> SimulationResult:
    """Simulate n + burn_in steps and keep the last n."""
    if int(n) != n or n < 1:
        raise DomainError(f"series length must be >= 1, got {n!r}")
    if int(burn_in) != burn_in or burn_in < 0:
        raise DomainError(f"burn-in must be >= 0, got {burn_in!r}")
    params.check_order(order)
    total = int(n) + int(burn_in)
    X = _design_matrix(covariates, order, total)

    xb = np.zeros(total)
    for k, b in enumerate(params.beta):
        xb = xb + b * X[:, k]

    g = np.zeros(total)
    r = np.zeros(total)
    y = np.empty(total)
    mu = np.empty(total)
    run = 0
    for t in range(total):
        eta = xb[t] + params.alpha
        for i, ph in enumerate(params.phi, start=1):
            eta = eta + ph * ((g[t - i] - xb[t - i]) if t >= i else 0.0)
        for j, th in enumerate(params.theta, start=1):
            if t >= j:
                eta = eta + th * r[t - j]
        if not math.isfinite(eta):
            raise DivergenceError(f"non-finite linear predictor at step {t + 1} of the simulation")
        mu_t = link.inverse(eta)
        clamped = bool(is_clamped(mu_t))
        run = run + 1 if clamped else 0
        if run > MAX_CLAMPED_RUN:
            raise DivergenceError(
                f"mean stuck at the boundary for more than {MAX_CLAMPED_RUN} consecutive steps "
                f"(step {t + 1}); parameters are explosive"
            )
        y_t = draw_beta(mu_t, params.nu, rng)
        g[t] = link.forward(y_t)
        r[t] = g[t] - (link.forward(mu_t) if clamped else eta)
        y[t] = y_t
        mu[t] = mu_t

    kept = slice(int(burn_in), total)
    cov = CovariateMatrix(X[kept]) if order.r else None
    logger.debug("simulated %d values after %d burn-in steps", n, burn_in)
    return SimulationResult(ObservationSeries(y[kept]), mu[kept], cov)


def simulate_barma(
    params: ParameterVector,
    order: ModelOrder,
    link: LinkFunction,
    n: int,
    burn_in: int = DEFAULT_BURN_IN,
    covariates: Optional[CovariateMatrix] = None,
    rng: Optional[RngStream] = None,
) -> ObservationSeries:
    """A simulated βARMA series of length n (burn-in discarded)."""
    if rng is None:
        raise DomainError("simulate_barma needs an RngStream")
    return simulate_path(params, order, link, n, rng, burn_in, covariates).series


def application_fixture(rng: RngStream, link: LinkFunction = LinkFunction()) -> SimulationResult:
    """Monthly-storage-shaped βARMA(1,1) series for the forecasting workflow."""
    order = APPLICATION_PARAMS.order
    return simulate_path(APPLICATION_PARAMS, order, link, APPLICATION_LENGTH, rng, DEFAULT_BURN_IN)
