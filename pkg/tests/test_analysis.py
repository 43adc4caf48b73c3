"""Tests for posterior summaries, characteristic roots and the unit-root report."""

import math

import numpy as np
import pytest

from core.errors import DomainError, InsufficientDrawsError
from core.model import ModelOrder
from pipelines.analysis import (
    ar_min_root_modulus,
    ar_polynomial,
    density_grid,
    draws_frame,
    ma_min_root_modulus,
    polynomial_roots,
    summarize_draws,
    thin_trace,
    unit_root_probability,
)
from runtime.chains import ChainDraws
from runtime.diagnostics import effective_sample_size, ess_rhat, split_rhat

# (φ1, φ2) → smallest modulus of 1 − φ1 z − φ2 z²
AR2_MODULI = [
    ((-0.25, -0.95), 1.025978),
    ((-0.15, 0.80), 1.028208),
    ((0.20, 0.75), 1.029040),
    ((-0.30, -0.90), 1.054093),
    ((-0.10, 0.80), 1.057279),
    ((0.40, 0.50), 1.069694),
    ((0.10, 0.80), 1.057279),
    ((-0.90, -0.60), 1.290994),
    ((0.10, -0.30), 1.825742),
    ((0.30, 0.10), 2.000000),
    ((0.60, -0.10), 3.162278),
]


def _chain(draws, names, chain_id=0):
    draws = np.asarray(draws, dtype=float)
    n = draws.shape[0]
    return ChainDraws(
        names=list(names),
        draws=draws,
        accept_stat=np.full(n, 0.8),
        tree_depth=np.full(n, 3),
        divergent=np.zeros(n, dtype=bool),
        step_size=0.1,
        chain_id=chain_id,
    )


def _ar2_chain(pairs, repeat):
    rows = [(20.0, 0.0, p1, p2) for p1, p2 in pairs for _ in range(repeat)]
    return _chain(rows, ["nu", "alpha", "phi1", "phi2"])


class TestRoots:
    @pytest.mark.parametrize("phi,expected", AR2_MODULI)
    def test_ar2_min_modulus(self, phi, expected):
        assert ar_min_root_modulus(phi) == pytest.approx(expected, abs=1e-5)

    @pytest.mark.parametrize("phi", [(0.5, -0.3, 0.2), (0.1, 0.2, 0.3, 0.25), (-0.4, 0.1, 0.05, -0.2, 0.3)])
    def test_higher_degree_matches_companion(self, phi):
        coeffs = ar_polynomial(phi)
        ours = polynomial_roots(coeffs)
        reference = np.roots(coeffs[::-1])
        assert sorted(np.abs(ours)) == pytest.approx(sorted(np.abs(reference)), rel=1e-8)
        residual = np.polyval(coeffs[::-1], ours)
        assert np.all(np.abs(residual) < 1e-9)

    def test_ar1(self):
        assert ar_min_root_modulus([0.5]) == pytest.approx(2.0)
        assert ar_min_root_modulus([-0.25]) == pytest.approx(4.0)

    def test_trailing_zero_stripped(self):
        assert ar_min_root_modulus([0.5, 0.0]) == pytest.approx(2.0)
        assert ar_min_root_modulus([0.5, 1e-14]) == pytest.approx(2.0)

    def test_empty_polynomials(self):
        assert ar_min_root_modulus([]) == math.inf
        assert ar_min_root_modulus([0.0, 0.0]) == math.inf
        assert ma_min_root_modulus([]) == math.inf

    def test_ma_polynomial(self):
        assert ma_min_root_modulus([0.5]) == pytest.approx(2.0)
        # 1 + 0.4z + 0.4z² has |z|² = 1/0.4
        assert ma_min_root_modulus([0.4, 0.4]) == pytest.approx(math.sqrt(2.5))


class TestUnitRootProbability:
    def test_mixture_of_two_truths(self):
        chain = _ar2_chain([(-0.25, -0.95), (0.30, 0.10)], repeat=10)
        report = unit_root_probability([chain], ModelOrder(2, 0))
        assert report.thresholds == [1.01, 1.02, 1.03, 1.04, 1.05]
        assert report.probabilities == [0.0, 0.0, 0.5, 0.5, 0.5]
        assert report.decision_probability == 0.5
        frame = report.to_frame()
        assert list(frame.columns) == ["threshold", "probability", "decision"]
        assert frame["decision"].tolist() == [False, False, False, False, True]

    def test_probabilities_monotone(self):
        rng = np.random.default_rng(0)
        pairs = list(zip(rng.uniform(-0.3, 0.3, 40), rng.uniform(0.6, 0.75, 40)))
        report = unit_root_probability([_ar2_chain(pairs, 1)], ModelOrder(2, 0), [1.0, 1.1, 1.3, 2.0])
        assert report.probabilities == sorted(report.probabilities)

    def test_ma_moduli_reported(self):
        rows = [(20.0, 0.0, 0.5, 0.5)] * 12
        chain = _chain(rows, ["nu", "alpha", "phi1", "theta1"])
        report = unit_root_probability([chain], ModelOrder(1, 1))
        assert np.allclose(report.moduli, 2.0)
        assert report.moduli_summary()["ma_min_modulus_median"] == pytest.approx(2.0)

    def test_bad_thresholds(self):
        chain = _ar2_chain([(0.3, 0.1)], 12)
        with pytest.raises(DomainError, match="thresholds"):
            unit_root_probability([chain], ModelOrder(2, 0), [1.05, 1.01])
        with pytest.raises(DomainError):
            unit_root_probability([chain], ModelOrder(2, 0), [0.9])

    def test_no_chains(self):
        with pytest.raises(InsufficientDrawsError):
            unit_root_probability([], ModelOrder(2, 0))


class TestSummarizeDraws:
    def test_quantiles_and_mean(self):
        values = np.arange(1, 101, dtype=float)
        chains = [
            _chain(np.column_stack((values[:50], -values[:50])), ["a", "b"], 0),
            _chain(np.column_stack((values[50:], -values[50:])), ["a", "b"], 1),
        ]
        summary = summarize_draws(chains, level=0.9)
        a = summary["a"]
        assert a.mean == pytest.approx(50.5)
        assert a.median == pytest.approx(50.5)
        assert a.lower == pytest.approx(np.quantile(values, 0.05))
        assert a.upper == pytest.approx(np.quantile(values, 0.95))
        assert summary["b"].mean == pytest.approx(-50.5)
        assert summary.n_draws == 100
        assert summary.n_chains == 2
        assert summary.names == ["a", "b"]

    def test_type7_interval(self):
        values = np.arange(1, 101, dtype=float)
        a = summarize_draws([_chain(values[:, None], ["a"])], level=0.9)["a"]
        assert a.lower == pytest.approx(5.95)
        assert a.upper == pytest.approx(95.05)

    def test_frame_columns(self):
        rng = np.random.default_rng(1)
        chains = [_chain(rng.normal(size=(200, 2)), ["x", "y"], i) for i in range(2)]
        frame = summarize_draws(chains).to_frame()
        assert list(frame.columns) == ["parameter", "mean", "median", "sd", "lower", "upper", "ess", "rhat"]
        assert frame["ess"].gt(100).all()
        assert frame["rhat"].lt(1.05).all()

    def test_too_few_draws(self):
        with pytest.raises(InsufficientDrawsError):
            summarize_draws([_chain(np.ones((5, 1)), ["a"])])

    def test_bad_level(self):
        with pytest.raises(DomainError, match="level"):
            summarize_draws([_chain(np.ones((50, 1)), ["a"])], level=1.0)

    def test_missing_parameter(self):
        summary = summarize_draws([_chain(np.random.default_rng(2).normal(size=(40, 1)), ["a"])])
        with pytest.raises(KeyError):
            summary["z"]


class TestDiagnostics:
    def test_iid_ess_close_to_draw_count(self):
        samples = np.random.default_rng(3).normal(size=(4, 2000))
        ess = effective_sample_size(samples)
        assert 0.75 * 8000 < ess < 1.3 * 8000

    def test_autocorrelated_ess(self):
        rng = np.random.default_rng(4)
        rho = 0.9
        chains = np.empty((4, 5000))
        for c in range(4):
            x = rng.normal()
            for t in range(5000):
                x = rho * x + math.sqrt(1 - rho * rho) * rng.normal()
                chains[c, t] = x
        expected = 20000 * (1 - rho) / (1 + rho)
        assert effective_sample_size(chains) == pytest.approx(expected, rel=0.3)

    def test_rhat_flags_disagreeing_chains(self):
        rng = np.random.default_rng(5)
        good = rng.normal(size=(4, 1000))
        assert split_rhat(good) < 1.02
        bad = good + np.array([[0.0], [0.0], [3.0], [3.0]])
        assert split_rhat(bad) > 1.5

    def test_constant_is_nan(self):
        assert math.isnan(effective_sample_size(np.ones((2, 100))))
        assert math.isnan(split_rhat(np.ones((2, 100))))

    def test_ess_rhat_per_parameter(self):
        rng = np.random.default_rng(6)
        chains = [_chain(rng.normal(size=(100, 2)), ["p", "q"], i) for i in range(3)]
        out = ess_rhat(chains)
        assert set(out) == {"p", "q"}

    def test_ess_rhat_needs_draws(self):
        with pytest.raises(InsufficientDrawsError):
            ess_rhat([_chain(np.ones((4, 1)), ["p"])])


class TestPlotTables:
    def test_draws_frame(self):
        chains = [_chain(np.ones((3, 2)), ["a", "b"], i) for i in range(2)]
        frame = draws_frame(chains)
        assert len(frame) == 6
        assert list(frame.columns[:4]) == ["chain", "iteration", "a", "b"]
        assert frame["chain"].unique().tolist() == [1, 2]

    def test_thin_trace(self):
        chain = _chain(np.arange(20, dtype=float).reshape(10, 2), ["a", "b"])
        trace = thin_trace([chain], every=3)
        assert len(trace) == 4 * 2
        assert trace.loc[trace["parameter"] == "a", "iteration"].tolist() == [1, 4, 7, 10]

    def test_density_grid_skips_constant(self):
        rng = np.random.default_rng(7)
        draws = np.column_stack((rng.normal(size=300), np.full(300, 2.0)))
        grid = density_grid([_chain(draws, ["moving", "fixed"])], points=64)
        assert grid["parameter"].unique().tolist() == ["moving"]
        assert len(grid) == 64
        dx = grid["x"].iloc[1] - grid["x"].iloc[0]
        assert grid["density"].sum() * dx == pytest.approx(1.0, abs=0.05)
