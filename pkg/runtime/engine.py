"""
Barma Engine — workflow orchestrator.

Ties a BarmaConfig to the library: builds the link, priors and model
order it describes, then runs the fit, forecast, simulate, select,
unit-root and study workflows.  The engine returns result objects and
never touches the filesystem; writing outputs is the CLI's job.

# ---- Changelog ----
# [2026-10-16] Rewritten as the barma orchestrator.
#   What: BarmaEngine with fit/forecast/simulate/select/unitroot/study and
#         the FitResult bundle.
#   Why:  Every command resolves the same config into the same objects;
#         doing it in one place keeps the CLI a thin shell.
#   How:  Config → (LinkFunction, PriorSpec, ModelOrder, SamplerConfig);
#         thread count resolved once and passed to the parallel stages.
# -------------------
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.config import BarmaConfig, load_config
from core.errors import DimensionError, DomainError
from core.model import (
    BarmaData,
    CovariateMatrix,
    LinkFunction,
    ModelOrder,
    ObservationSeries,
    ParameterVector,
)
from core.posterior import PosteriorEvaluator, PriorSpec
from core.rng import RngStream
from pipelines.analysis import PosteriorSummary, RootReport, summarize_draws, unit_root_probability
from pipelines.forecast import ForecastResult, predictive_draws
from pipelines.selection import LadderSpec, SelectionReport, order_search
from pipelines.simulate import SimulationResult, application_fixture, simulate_path
from pipelines.study import StudyReport, mc_experiment, preset_design
from runtime.chains import ChainDraws, run_chains

logger = logging.getLogger("barma.engine")

# Stream indices under the master seed, one per workflow that draws
# randomness outside the per-chain streams.
FORECAST_STREAM = 1001
SIMULATE_STREAM = 1002


@dataclass
class FitResult:
    """Posterior draws for one order plus their summaries."""
    order: ModelOrder
    chains: List[ChainDraws]
    summary: PosteriorSummary
    roots: Optional[RootReport] = None

    @property
    def n_divergent(self) -> int:
        return sum(c.n_divergent for c in self.chains)


class BarmaEngine:
    """Runs barma workflows from one resolved configuration.

    Usage: ``BarmaEngine(config).fit(series)`` and friends.
    """

    def __init__(self, config: Optional[BarmaConfig] = None) -> None:
        self._config = (config or load_config()).validate()
        self._threads = self._config.runtime.resolved_threads()

    @property
    def config(self) -> BarmaConfig:
        return self._config

    @property
    def threads(self) -> int:
        return self._threads

    # -----------------------------------------------------------------
    # Resolved model pieces
    # -----------------------------------------------------------------

    @property
    def link(self) -> LinkFunction:
        return LinkFunction.from_name(self._config.model.link)

    @property
    def priors(self) -> PriorSpec:
        p = self._config.priors
        return PriorSpec(
            nu_shape=p.nu_shape,
            nu_rate=p.nu_rate,
            alpha_prior=p.alpha_prior,
            sigma2_alpha=p.sigma2_alpha,
            sigma2_beta=p.sigma2_beta,
            sigma2_phi=p.sigma2_phi,
            sigma2_theta=p.sigma2_theta,
        )

    def order(self, r: int = 0) -> ModelOrder:
        return ModelOrder(self._config.model.p, self._config.model.q, r)

    def ladder(self) -> LadderSpec:
        s = self._config.selection
        return LadderSpec.power(
            s.rungs,
            s.exponent,
            draws_per_rung=s.draws_per_rung,
            warmup_per_rung=s.warmup_per_rung,
            target_accept=self._config.sampler.target_accept,
            max_tree_depth=self._config.sampler.max_tree_depth,
        )

    # -----------------------------------------------------------------
    # Workflows
    # -----------------------------------------------------------------

    def fit(self, series: ObservationSeries, covariates: Optional[CovariateMatrix] = None) -> FitResult:
        """Sample the posterior of the configured order."""
        data = BarmaData(series, covariates)
        order = self.order(data.covariates.r)
        if len(series) <= order.start:
            raise DimensionError(
                f"series of length {len(series)} is too short for order {order.label()}"
            )
        evaluator = PosteriorEvaluator(data, order, self.priors, self.link)
        logger.info("Fitting order %s (r=%d) to %d observations", order.label(), order.r, data.n)
        chains = run_chains(evaluator, self._config.sampler, threads=self._threads)
        return self.summarize(chains, order)

    def summarize(self, chains: Sequence[ChainDraws], order: ModelOrder) -> FitResult:
        analysis = self._config.analysis
        summary = summarize_draws(chains, analysis.level)
        roots = self.unitroot(chains, order) if order.p else None
        return FitResult(order, list(chains), summary, roots)

    def unitroot(self, chains: Sequence[ChainDraws], order: ModelOrder) -> RootReport:
        analysis = self._config.analysis
        return unit_root_probability(chains, order, analysis.thresholds, analysis.decision_threshold)

    def split_holdout(
        self,
        series: ObservationSeries,
        covariates: Optional[CovariateMatrix] = None,
    ) -> Tuple[ObservationSeries, Optional[CovariateMatrix], Optional[np.ndarray], Optional[np.ndarray]]:
        """(fit series, fit covariates, held-out actuals, held-out covariate rows)."""
        holdout = self._config.forecast.holdout
        if holdout == 0:
            return series, covariates, None, None
        n = len(series)
        if holdout >= n:
            raise DomainError(f"holdout of {holdout} leaves nothing to fit in a series of {n}")
        head = series.head(n - holdout)
        actuals = series.values[n - holdout:].copy()
        if covariates is None or covariates.r == 0:
            return head, None, actuals, None
        return head, covariates.head(n - holdout), actuals, np.asarray(covariates.values[n - holdout:])

    def forecast(
        self,
        series: ObservationSeries,
        covariates: Optional[CovariateMatrix] = None,
        fit: Optional[FitResult] = None,
        future: Optional[np.ndarray] = None,
    ) -> Tuple[ForecastResult, FitResult]:
        """Fit on all but the holdout (unless ``fit`` is given) and forecast ahead."""
        cfg = self._config.forecast
        history, hist_cov, actuals, held_cov = self.split_holdout(series, covariates)
        if fit is None:
            fit = self.fit(history, hist_cov)
        if fit.order.r:
            rows = future if future is not None else held_cov
            if rows is None:
                raise DomainError(f"forecasting with {fit.order.r} covariate(s) needs future covariate rows")
            hist_cov = (hist_cov or CovariateMatrix.empty(len(history))).with_future(rows)
        result = predictive_draws(
            fit.chains,
            history,
            fit.order,
            self.link,
            cfg.horizon,
            RngStream(self._config.sampler.seed).split(FORECAST_STREAM),
            covariates=hist_cov,
            level=cfg.level,
            actuals=actuals,
            max_draws=cfg.max_draws,
        )
        return result, fit

    def simulate(
        self,
        params: Optional[ParameterVector],
        n: int,
        burn_in: Optional[int] = None,
        covariates: Optional[CovariateMatrix] = None,
    ) -> SimulationResult:
        """Simulate from ``params``; ``None`` selects the application fixture."""
        rng = RngStream(self._config.sampler.seed).split(SIMULATE_STREAM)
        if params is None:
            return application_fixture(rng, self.link)
        burn = self._config.study.burn_in if burn_in is None else burn_in
        return simulate_path(params, params.order, self.link, n, rng, burn, covariates)

    def select(self, series: ObservationSeries, covariates: Optional[CovariateMatrix] = None) -> SelectionReport:
        data = BarmaData(series, covariates)
        sel = self._config.selection
        return order_search(
            data,
            [tuple(pq) for pq in sel.grid],
            self.priors,
            self.ladder(),
            self._config.sampler.seed,
            link=self.link,
            threads=self._threads,
            wide_prior_variance=sel.wide_prior_warning_variance,
        )

    def study(self) -> StudyReport:
        design = preset_design(
            self._config.study,
            self._config.sampler,
            self._config.analysis,
            self.link,
            default_priors=self.priors,
        )
        return mc_experiment(design, threads=self._threads)
