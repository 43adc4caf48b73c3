"""Tests for the stepping-stone marginal likelihood and order selection."""

import logging
import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import expit, gammaln, logsumexp

from core.errors import DomainError, EstimationError
from core.model import BarmaData, LinkFunction, ModelOrder, ParameterVector
from core.posterior import PosteriorEvaluator, PriorSpec
from core.rng import RngStream
from pipelines.selection import (
    LadderSpec,
    OrderResult,
    _rung_estimate,
    log_bayes_factor,
    log_ml_table,
    order_search,
    select_from_log_mls,
    select_order,
    stepping_stone_log_ml,
)
from pipelines.simulate import simulate_barma

# Published log marginal likelihoods for the monthly storage series.
STORAGE_LOG_MLS = {(0, 1): 107.26, (1, 0): 117.91, (1, 1): 111.72, (1, 2): 99.69, (2, 1): 101.47}


def _constant_mean_series(n=40, seed=12):
    truth = ParameterVector(nu=30.0, alpha=0.3)
    return simulate_barma(truth, truth.order, LinkFunction(), n, burn_in=0, rng=RngStream(seed))


def _quadrature_log_ml(y, priors):
    """log ∫∫ π(ν) π(α) L(ν, α) for the constant-mean model, on a fine grid."""
    s1 = np.sum(np.log(y))
    s2 = np.sum(np.log1p(-y))
    zeta = np.linspace(math.log(0.5), math.log(500.0), 1500)
    alpha = np.linspace(-4.0, 4.0, 1500)
    z, a = np.meshgrid(zeta, alpha, indexing="ij")
    nu = np.exp(z)
    mu = expit(a)
    loglik = (
        y.size * (gammaln(nu) - gammaln(nu * mu) - gammaln(nu * (1.0 - mu)))
        + (nu * mu - 1.0) * s1
        + (nu * (1.0 - mu) - 1.0) * s2
    )
    log_prior = (
        stats.gamma.logpdf(nu, priors.nu_shape, scale=1.0 / priors.nu_rate) + z
        + stats.norm.logpdf(a, scale=math.sqrt(priors.sigma2_alpha))
    )
    cell = (zeta[1] - zeta[0]) * (alpha[1] - alpha[0])
    return float(logsumexp(loglik + log_prior) + math.log(cell))


class TestLadderSpec:
    def test_power_ladder(self):
        ladder = LadderSpec.power(30, 5.0)
        temps = ladder.temperatures
        assert ladder.steps == 30
        assert temps[0] == 0.0
        assert temps[-1] == 1.0
        assert temps[1] == pytest.approx((1.0 / 30.0) ** 5)
        assert all(b > a for a, b in zip(temps, temps[1:]))

    def test_budget_passed_through(self):
        ladder = LadderSpec.power(4, 3.0, draws_per_rung=50, warmup_per_rung=5)
        assert ladder.draws_per_rung == 50
        assert ladder.warmup_per_rung == 5

    @pytest.mark.parametrize("temps", [(0.1, 1.0), (0.0, 0.9), (0.0, 0.5, 0.5, 1.0), (1.0,)])
    def test_invalid_temperatures(self, temps):
        with pytest.raises(DomainError):
            LadderSpec(temps)

    def test_too_few_draws(self):
        with pytest.raises(DomainError, match="2 draws"):
            LadderSpec((0.0, 1.0), draws_per_rung=1)

    def test_zero_rungs(self):
        with pytest.raises(DomainError):
            LadderSpec.power(0)


class TestRungEstimate:
    def test_constant_likelihood(self):
        est = _rung_estimate(0, 0.0, 0.25, np.full(10, -8.0), mcmc=False)
        assert est.log_ratio == pytest.approx(-2.0)
        assert est.std_error == 0.0
        assert est.n_draws == 10

    def test_log_mean_exp(self):
        log_lik = np.log(np.array([1.0, 2.0, 3.0, 6.0]))
        est = _rung_estimate(2, 0.5, 1.5, log_lik, mcmc=False)
        assert est.log_ratio == pytest.approx(math.log(3.0))
        assert est.std_error > 0.0

    def test_no_finite_values(self):
        with pytest.raises(EstimationError, match="no finite"):
            _rung_estimate(1, 0.2, 0.3, np.full(5, -np.inf), mcmc=True)


class TestSteppingStone:
    def test_matches_quadrature(self):
        series = _constant_mean_series()
        priors = PriorSpec(sigma2_alpha=1.0)
        evaluator = PosteriorEvaluator(BarmaData(series), ModelOrder(), priors)
        ladder = LadderSpec.power(12, 5.0, draws_per_rung=200, warmup_per_rung=50)
        estimate = stepping_stone_log_ml(evaluator, ladder, RngStream(99))
        exact = _quadrature_log_ml(series.values, priors)
        assert estimate.log_ml == pytest.approx(exact, abs=0.5)
        assert len(estimate.rungs) == 12
        assert estimate.std_error > 0.0
        frame = estimate.to_frame()
        assert frame["index"].tolist() == list(range(12))
        assert frame["log_ratio"].sum() == pytest.approx(estimate.log_ml)

    def test_deterministic(self):
        series = _constant_mean_series(n=25)
        evaluator = PosteriorEvaluator(BarmaData(series), ModelOrder(), PriorSpec(sigma2_alpha=1.0))
        ladder = LadderSpec.power(3, 5.0, draws_per_rung=20, warmup_per_rung=5)
        a = stepping_stone_log_ml(evaluator, ladder, RngStream(1))
        b = stepping_stone_log_ml(evaluator, ladder, RngStream(1))
        assert a.log_ml == b.log_ml

    def test_wide_prior_warning(self, caplog):
        series = _constant_mean_series(n=25)
        evaluator = PosteriorEvaluator(BarmaData(series), ModelOrder())
        ladder = LadderSpec.power(2, 5.0, draws_per_rung=10, warmup_per_rung=5)
        with caplog.at_level(logging.WARNING, logger="barma.selection"):
            stepping_stone_log_ml(evaluator, ladder, RngStream(2))
        assert any("very wide" in rec.getMessage() for rec in caplog.records)


class TestOrderSelection:
    def test_bayes_factor(self):
        assert log_bayes_factor(117.91, 111.72) == pytest.approx(6.19)
        with pytest.raises(DomainError):
            log_bayes_factor(math.nan, 1.0)

    def test_bayes_factor_antisymmetric(self):
        assert log_bayes_factor(3.5, 3.5) == 0.0
        assert log_bayes_factor(99.69, 107.26) == pytest.approx(-log_bayes_factor(107.26, 99.69))

    def test_single_order(self):
        assert select_from_log_mls({(2, 1): 101.47}).selected == (2, 1)

    def test_select_from_published_values(self):
        report = select_from_log_mls(STORAGE_LOG_MLS)
        assert report.selected == (1, 0)
        assert report.log_ml(1, 1) == 111.72
        frame = report.to_frame()
        assert len(frame) == 6
        assert frame["row"].tolist() == ["order"] * 5 + ["selected"]
        assert frame.iloc[-1]["model"] == "(1,0)"
        factors = report.bayes_factors()
        assert len(factors) == 20
        row = factors[(factors["model_a"] == "(1,0)") & (factors["model_b"] == "(1,1)")]
        assert row["log_bayes_factor"].iloc[0] == pytest.approx(6.19)

    def test_failed_orders_skipped(self):
        results = [
            OrderResult(1, 0, error="DivergenceError: boom"),
            OrderResult(0, 1, log_ml=3.0, std_error=0.1),
        ]
        report = select_order(results)
        assert report.selected == (0, 1)
        assert report.to_frame()["status"].iloc[0].startswith("failed")
        assert len(report.bayes_factors()) == 0

    def test_all_failed(self):
        with pytest.raises(EstimationError):
            select_order([OrderResult(1, 0, error="x")])

    def test_unknown_order(self):
        report = select_from_log_mls({(1, 0): 1.0})
        with pytest.raises(KeyError):
            report.log_ml(3, 3)

    def test_order_search_small_grid(self):
        truth = ParameterVector(nu=40.0, alpha=0.2, phi=(0.5,))
        series = simulate_barma(truth, truth.order, LinkFunction(), 40, rng=RngStream(5))
        ladder = LadderSpec.power(3, 5.0, draws_per_rung=20, warmup_per_rung=5)
        priors = PriorSpec(sigma2_alpha=1.0, sigma2_phi=1.0, sigma2_theta=1.0)
        report = order_search(BarmaData(series), [(1, 0), (0, 1)], priors, ladder, seed=3)
        assert [r.label for r in report.results] == ["(1,0)", "(0,1)"]
        assert report.selected in [(1, 0), (0, 1)]
        assert set(log_ml_table(report)) == {"(1,0)", "(0,1)"}

    def test_order_search_empty_grid(self):
        series = _constant_mean_series(n=20)
        with pytest.raises(DomainError, match="empty"):
            order_search(BarmaData(series), [], PriorSpec(), LadderSpec.power(2), seed=1)


@pytest.mark.slow
class TestSelectionAccuracy:
    def test_stepping_stone_full_ladder_matches_quadrature(self):
        series = _constant_mean_series()
        priors = PriorSpec(sigma2_alpha=1.0)
        evaluator = PosteriorEvaluator(BarmaData(series), ModelOrder(), priors)
        ladder = LadderSpec.power(30, 5.0, draws_per_rung=2000, warmup_per_rung=200)
        estimate = stepping_stone_log_ml(evaluator, ladder, RngStream(41))
        error = abs(estimate.log_ml - _quadrature_log_ml(series.values, priors))
        assert error < 0.1
        assert error < 3.0 * estimate.std_error

    def test_ar1_truth_selected(self):
        truth = ParameterVector(nu=50.0, alpha=0.0, phi=(0.5,))
        priors = PriorSpec(sigma2_alpha=1.0, sigma2_phi=1.0, sigma2_theta=1.0)
        ladder = LadderSpec.power(20, 5.0, draws_per_rung=300, warmup_per_rung=100)
        hits = 0
        for seed in range(10):
            series = simulate_barma(truth, truth.order, LinkFunction(), 500, rng=RngStream(100 + seed))
            report = order_search(BarmaData(series), [(1, 0), (0, 1), (1, 1)], priors, ladder, seed=seed, threads=3)
            hits += report.selected == (1, 0)
        assert hits >= 8
