"""Tests for leapfrog, NUTS transitions, step-size adaptation and chain running."""

import math

import numpy as np
import pytest

from core.config import SamplerConfig
from core.errors import ConfigError, DataFileError, SamplingError
from core.rng import RngStream
from runtime.adaptation import DualAveraging, adapt_warmup, find_reasonable_step_size
from runtime.chains import ChainDraws, _chain_task, load_draws, pooled, run_chain, run_chains, save_draws
from runtime.diagnostics import ess_rhat
from runtime.sampler import PhaseState, hamiltonian, leapfrog, nuts_transition
from tests.targets import CorrelatedNormalTarget, StandardNormalTarget


class _NowhereTarget(StandardNormalTarget):
    """Zero density everywhere."""

    def value_and_grad(self, point):
        return -math.inf, np.zeros(self.dim)


class _NormalizedNormalTarget(StandardNormalTarget):
    """N(0, I_d) with its normalizing constant."""

    def value_and_grad(self, point):
        value, grad = super().value_and_grad(point)
        return value - 0.5 * self.dim * math.log(2.0 * math.pi), grad


class _FloatFaultTarget(StandardNormalTarget):
    def value_and_grad(self, point):
        raise FloatingPointError("overflow in gradient")


def _energy_error(step_size, n_steps):
    target = StandardNormalTarget(1)
    state = PhaseState.at(target, [1.0], [0.0])
    h0 = hamiltonian(state)
    for _ in range(n_steps):
        state = leapfrog(state, step_size, target)
    return hamiltonian(state) - h0


class TestLeapfrog:
    def test_hand_step(self):
        target = StandardNormalTarget(1)
        moved = leapfrog(PhaseState.at(target, [0.0], [1.0]), 0.2, target)
        assert moved.position[0] == pytest.approx(0.2, abs=1e-12)
        assert moved.momentum[0] == pytest.approx(0.98, abs=1e-12)

    def test_hand_hamiltonian(self):
        state = PhaseState.at(_NormalizedNormalTarget(1), [1.0], [1.0])
        assert hamiltonian(state) == pytest.approx(0.5 + 0.5 + 0.5 * math.log(2.0 * math.pi), rel=1e-12)

    def test_energy_error_is_second_order(self):
        coarse = _energy_error(0.1, 10)
        fine = _energy_error(0.05, 20)
        assert coarse != 0.0
        assert abs(fine) <= abs(coarse) / 3.5

    def test_energy_nearly_conserved(self):
        target = StandardNormalTarget(3)
        state = PhaseState.at(target, [0.5, -0.2, 1.0], [0.3, 0.1, -0.4])
        h0 = hamiltonian(state)
        for _ in range(100):
            state = leapfrog(state, 0.01, target)
        assert abs(hamiltonian(state) - h0) < 1e-4
        assert not state.divergent

    def test_reversible(self):
        target = CorrelatedNormalTarget()
        start = PhaseState.at(target, [0.4, -0.3], [1.0, 0.2])
        moved = start
        for _ in range(10):
            moved = leapfrog(moved, 0.1, target)
        back = moved.with_momentum(-moved.momentum)
        for _ in range(10):
            back = leapfrog(back, 0.1, target)
        assert np.allclose(back.position, start.position, atol=1e-10)

    def test_huge_step_diverges(self):
        target = StandardNormalTarget(2)
        state = PhaseState.at(target, [1.0, 1.0])
        assert leapfrog(state, 100.0, target).divergent

    def test_zero_density_is_divergent(self):
        target = _NowhereTarget(2)
        state = PhaseState(np.zeros(2), np.zeros(2), 0.0, np.zeros(2))
        moved = leapfrog(state, 0.1, target)
        assert moved.divergent
        assert hamiltonian(moved) == math.inf


class TestNutsTransition:
    def test_depth_zero_is_one_step(self):
        target = StandardNormalTarget(2)
        state = PhaseState.at(target, [0.1, 0.2])
        _, info = nuts_transition(state, 0.5, target, RngStream(1), max_depth=0)
        assert info.n_leapfrog == 1

    def test_depth_cap(self):
        target = StandardNormalTarget(5)
        state = PhaseState.at(target, np.full(5, 0.3))
        for seed in range(20):
            _, info = nuts_transition(state, 1e-3, target, RngStream(seed), max_depth=3)
            assert info.tree_depth <= 3
            assert info.n_leapfrog <= 2 ** 3

    def test_accept_stat_in_unit_interval(self):
        target = CorrelatedNormalTarget()
        state = PhaseState.at(target, [0.0, 0.0])
        rng = RngStream(5)
        for _ in range(50):
            state, info = nuts_transition(state, 0.4, target, rng)
            assert 0.0 <= info.accept_stat <= 1.0


class TestAdaptation:
    def test_dual_averaging_fixed_point(self):
        averager = DualAveraging(0.2, target_accept=0.8)
        for _ in range(50):
            averager.update(0.8)
        assert averager.final_step_size == pytest.approx(2.0)

    def test_low_acceptance_shrinks_step(self):
        averager = DualAveraging(0.5, target_accept=0.8)
        for _ in range(30):
            averager.update(0.1)
        assert averager.step_size < 0.5

    def test_reasonable_step_size(self):
        target = StandardNormalTarget(2)
        state = PhaseState.at(target, [0.2, -0.1])
        eps = find_reasonable_step_size(state, target, RngStream(2))
        assert 0.01 < eps < 10.0

    def test_warmup_too_short(self):
        target = StandardNormalTarget(2)
        state = PhaseState.at(target, [0.0, 0.0])
        with pytest.raises(ConfigError, match="warmup"):
            adapt_warmup(target, state, 5, RngStream(1))

    def test_warmup_hits_target_acceptance(self):
        target = StandardNormalTarget(4)
        chain = run_chain(target, 300, 500, RngStream(11), target_accept=0.8)
        assert chain.mean_accept == pytest.approx(0.8, abs=0.12)

    @pytest.mark.slow
    def test_higher_target_gives_smaller_step(self):
        target = StandardNormalTarget(5)
        steps = {}
        for accept in (0.6, 0.99):
            state = PhaseState.at(target, np.full(5, 0.2))
            steps[accept], _ = adapt_warmup(target, state, 1000, RngStream(17), target_accept=accept)
        assert steps[0.99] < steps[0.6]


class TestRunChain:
    def test_standard_normal_moments(self):
        chain = run_chain(StandardNormalTarget(2), 200, 3000, RngStream(21))
        assert chain.draws.shape == (3000, 2)
        assert np.allclose(chain.draws.mean(axis=0), 0.0, atol=0.12)
        assert np.allclose(chain.draws.var(axis=0), 1.0, atol=0.15)

    def test_correlated_normal(self):
        chain = run_chain(CorrelatedNormalTarget(0.9), 300, 3000, RngStream(22))
        corr = np.corrcoef(chain.draws.T)[0, 1]
        assert corr == pytest.approx(0.9, abs=0.05)

    def test_deterministic(self):
        a = run_chain(StandardNormalTarget(2), 50, 100, RngStream(9))
        b = run_chain(StandardNormalTarget(2), 50, 100, RngStream(9))
        assert np.array_equal(a.draws, b.draws)
        assert a.step_size == b.step_size

    def test_warm_start(self):
        target = StandardNormalTarget(2)
        chain = run_chain(
            target, 0, 20, RngStream(3), init=np.array([0.1, 0.1]), initial_step_size=0.7, min_warmup=0
        )
        assert chain.step_size == 0.7
        assert chain.final_point.shape == (2,)

    def test_no_finite_start(self):
        with pytest.raises(SamplingError, match="starting point"):
            run_chain(_NowhereTarget(2), 20, 10, RngStream(1))

    def test_names(self):
        chain = run_chain(StandardNormalTarget(3), 20, 10, RngStream(1))
        assert chain.names == ["x1", "x2", "x3"]
        assert chain.column("x2").shape == (10,)
        with pytest.raises(KeyError, match="x9"):
            chain.column("x9")


class TestRunChains:
    def test_chains_are_independent_of_count(self):
        one = run_chains(StandardNormalTarget(2), SamplerConfig(n_chains=1, n_iterations=80, seed=4))
        two = run_chains(StandardNormalTarget(2), SamplerConfig(n_chains=2, n_iterations=80, seed=4))
        assert [c.chain_id for c in two] == [0, 1]
        assert np.array_equal(one[0].draws, two[0].draws)
        assert not np.array_equal(two[0].draws, two[1].draws)
        assert pooled(two).shape == (80, 2)

    def test_all_chains_fail(self):
        with pytest.raises(SamplingError, match="all chains failed"):
            run_chains(_NowhereTarget(2), SamplerConfig(n_chains=2, n_iterations=60))

    def test_foreign_exception_becomes_sampling_error(self):
        result = _chain_task((_FloatFaultTarget(2), SamplerConfig(n_chains=1, n_iterations=80), 0))
        assert isinstance(result, SamplingError)
        assert "FloatingPointError" in str(result)

    def test_foreign_exception_does_not_escape(self):
        with pytest.raises(SamplingError, match="all chains failed.*FloatingPointError"):
            run_chains(_FloatFaultTarget(2), SamplerConfig(n_chains=2, n_iterations=60))

    @pytest.mark.slow
    def test_calibration_on_standard_normal(self):
        config = SamplerConfig(n_chains=4, n_iterations=2000, warmup_fraction=0.5, seed=31)
        chains = run_chains(StandardNormalTarget(5), config)
        assert len(chains) == 4
        diagnostics = ess_rhat(chains)
        means = pooled(chains).mean(axis=0)
        for j, name in enumerate(chains[0].names):
            assert abs(means[j]) < 4.0 / math.sqrt(diagnostics[name].ess), name
            assert diagnostics[name].rhat < 1.02, name
        accept = np.mean([c.mean_accept for c in chains])
        assert accept == pytest.approx(0.8, abs=0.1)


class TestDrawsFile:
    def test_save_and_load(self, tmp_path):
        chains = run_chains(StandardNormalTarget(2), SamplerConfig(n_chains=2, n_iterations=60, seed=8))
        path = save_draws(chains, tmp_path / "draws.msgpack", meta={"p": 1, "q": 0, "link": "logit"})
        loaded, meta = load_draws(path)
        assert meta == {"p": 1, "q": 0, "link": "logit"}
        assert len(loaded) == 2
        for before, after in zip(chains, loaded):
            assert np.array_equal(before.draws, after.draws)
            assert after.step_size == before.step_size
            assert after.names == before.names

    def test_not_a_draws_file(self, tmp_path):
        path = tmp_path / "junk.msgpack"
        path.write_bytes(b"\x00\x01garbage")
        with pytest.raises(DataFileError):
            load_draws(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFileError, match="cannot read"):
            load_draws(tmp_path / "absent.msgpack")

    def test_round_trip_dict_keeps_log_lik(self):
        chain = ChainDraws(
            names=["a"],
            draws=np.ones((3, 1)),
            accept_stat=np.full(3, 0.9),
            tree_depth=np.ones(3, dtype=int),
            divergent=np.zeros(3, dtype=bool),
            step_size=0.3,
            log_lik=np.array([-1.0, -2.0, -3.0]),
        )
        again = ChainDraws.from_dict(chain.to_dict())
        assert again.log_lik.tolist() == [-1.0, -2.0, -3.0]
        assert again.n_divergent == 0
