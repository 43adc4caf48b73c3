"""Tests for forward simulation of βARMA series."""

import numpy as np
import pytest

from core.errors import DimensionError, DivergenceError, DomainError
from core.model import CovariateMatrix, LinkFunction, LinkKind, ModelOrder, ParameterVector, filter_recursion
from core.rng import RngStream
from pipelines.simulate import (
    APPLICATION_HOLDOUT,
    APPLICATION_LENGTH,
    APPLICATION_PARAMS,
    application_fixture,
    simulate_barma,
    simulate_path,
)

ARMA11 = ParameterVector(nu=50.0, alpha=0.1, phi=(0.4,), theta=(0.4,))


class TestSimulatePath:
    @pytest.mark.parametrize("link", [LinkFunction(), LinkFunction(LinkKind.CLOGLOG)])
    def test_filter_replays_simulated_means(self, link):
        sim = simulate_path(ARMA11, ARMA11.order, link, 150, RngStream(3), burn_in=0)
        out = filter_recursion(ARMA11, sim.series, None, ARMA11.order, link)
        assert np.allclose(out.mu, sim.mu, rtol=1e-12, atol=0.0)

    def test_replay_with_covariates(self):
        params = ParameterVector(nu=80.0, alpha=-0.2, beta=(0.3,), phi=(0.5,), theta=(-0.2,))
        x = np.sin(np.arange(60) / 5.0)
        sim = simulate_path(params, params.order, LinkFunction(), 60, RngStream(8), 0, CovariateMatrix(x))
        out = filter_recursion(params, sim.series, sim.covariates, params.order, LinkFunction())
        assert np.allclose(out.mu, sim.mu, rtol=1e-12, atol=0.0)

    def test_burn_in_discarded(self):
        sim = simulate_path(ARMA11, ARMA11.order, LinkFunction(), 100, RngStream(1), burn_in=50)
        assert len(sim.series) == 100
        assert sim.mu.shape == (100,)

    def test_values_inside_unit_interval(self):
        sim = simulate_path(ARMA11, ARMA11.order, LinkFunction(), 500, RngStream(2))
        assert np.all((sim.series.values > 0.0) & (sim.series.values < 1.0))

    def test_seed_determinism(self):
        a = simulate_barma(ARMA11, ARMA11.order, LinkFunction(), 80, rng=RngStream(11))
        b = simulate_barma(ARMA11, ARMA11.order, LinkFunction(), 80, rng=RngStream(11))
        c = simulate_barma(ARMA11, ARMA11.order, LinkFunction(), 80, rng=RngStream(12))
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_long_run_mean(self):
        params = ParameterVector(nu=100.0, alpha=0.0, phi=(0.5,))
        sim = simulate_path(params, params.order, LinkFunction(), 4000, RngStream(4))
        assert sim.series.values.mean() == pytest.approx(0.5, abs=0.02)

    def test_explosive_parameters(self):
        params = ParameterVector(nu=50.0, alpha=1.0, phi=(1.5,))
        with pytest.raises(DivergenceError):
            simulate_path(params, params.order, LinkFunction(), 200, RngStream(1))

    def test_order_mismatch(self):
        with pytest.raises(DimensionError):
            simulate_path(ARMA11, ModelOrder(2, 1), LinkFunction(), 10, RngStream(1))

    def test_covariates_include_burn_in(self):
        params = ParameterVector(nu=50.0, beta=(0.1,))
        with pytest.raises(DimensionError, match="burn-in"):
            simulate_path(params, params.order, LinkFunction(), 10, RngStream(1), 5, CovariateMatrix(np.ones(10)))

    @pytest.mark.parametrize("n,burn", [(0, 10), (10, -1), (2.5, 0)])
    def test_bad_lengths(self, n, burn):
        with pytest.raises(DomainError):
            simulate_path(ARMA11, ARMA11.order, LinkFunction(), n, RngStream(1), burn)

    def test_needs_stream(self):
        with pytest.raises(DomainError, match="RngStream"):
            simulate_barma(ARMA11, ARMA11.order, LinkFunction(), 10)


class TestApplicationFixture:
    def test_shape(self):
        sim = application_fixture(RngStream(20240101))
        assert len(sim.series) == APPLICATION_LENGTH
        assert APPLICATION_LENGTH - APPLICATION_HOLDOUT == 190
        assert APPLICATION_PARAMS.order == ModelOrder(1, 1)

    def test_level_matches_long_run_location(self):
        sim = application_fixture(RngStream(6))
        # ω = α/(1−φ) = 0.3452/0.4765 on the logit scale
        centre = 1.0 / (1.0 + np.exp(-0.3452 / (1.0 - 0.5235)))
        assert np.median(sim.series.values) == pytest.approx(centre, abs=0.1)
