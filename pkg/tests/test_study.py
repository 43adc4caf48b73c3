"""Tests for Monte Carlo study designs and the experiment runner."""

import pytest

from core.config import AnalysisConfig, SamplerConfig, StudyConfig
from core.errors import DomainError, EstimationError
from core.model import ParameterVector
from core.posterior import PriorSpec
import pipelines.study as study_module
from pipelines.study import (
    StudyCell,
    StudyDesign,
    mc_experiment,
    preset_design,
    prior_grid,
)

FAST = SamplerConfig(n_chains=1, n_iterations=80, seed=5)


def _ar1_cell(n=80):
    return StudyCell(ParameterVector(nu=50.0, alpha=0.0, phi=(0.3,)), n)


class TestPriorGrid:
    def test_nine_priors(self):
        grid = dict(prior_grid())
        assert len(grid) == 9
        assert grid["m50_v500"].nu_shape == pytest.approx(5.0)
        assert grid["m50_v500"].nu_rate == pytest.approx(0.1)
        assert grid["m100_v2000"].nu_rate == pytest.approx(0.05)
        assert grid["m1_v25"].nu_shape == pytest.approx(0.04)
        assert grid["m1_v25"].nu_rate == pytest.approx(0.04)


class TestPresets:
    @pytest.mark.parametrize("preset,count", [("point", 32), ("unitroot", 11), ("sensitivity", 36)])
    def test_cell_counts(self, preset, count):
        design = preset_design(StudyConfig(preset=preset), SamplerConfig())
        assert len(design.cells) == count
        assert design.name == preset

    def test_point_labels(self):
        labels = [c.label for c in preset_design(StudyConfig(), SamplerConfig()).cells]
        assert "nu50_phi0.4_theta0.4_n500" in labels
        assert "nu100_phi-0.5_theta-0.3_n200" in labels

    def test_unitroot_cells_are_ar2(self):
        design = preset_design(StudyConfig(preset="unitroot"), SamplerConfig())
        assert all(c.order.p == 2 and c.order.q == 0 for c in design.cells)
        assert all(c.truth.nu == 100.0 and c.n == 500 for c in design.cells)

    def test_sensitivity_labels_carry_prior(self):
        design = preset_design(StudyConfig(preset="sensitivity"), SamplerConfig())
        labels = [c.label for c in design.cells]
        assert "nu50_phi0.4_theta0.6_n200_m50_v500" in labels
        assert len(set(labels)) == 36

    def test_cell_filter(self):
        study = StudyConfig(preset="unitroot", cells=["nu100_phi0.3_phi0.1_n500"])
        design = preset_design(study, SamplerConfig())
        assert [c.label for c in design.cells] == ["nu100_phi0.3_phi0.1_n500"]

    def test_unknown_cell(self):
        with pytest.raises(DomainError, match="no cell"):
            preset_design(StudyConfig(cells=["nu1_n1"]), SamplerConfig())

    def test_replicates_and_analysis(self):
        analysis = AnalysisConfig(level=0.9, thresholds=[1.01, 1.05])
        design = preset_design(StudyConfig(full_replicates=True), SamplerConfig(seed=3), analysis)
        assert design.replicates == 50
        assert design.level == 0.9
        assert design.thresholds == (1.01, 1.05)
        assert design.seed == 3

    def test_default_priors_leave_grid_cells_alone(self):
        custom = PriorSpec(nu_shape=2.0, nu_rate=0.02)
        point = preset_design(StudyConfig(), SamplerConfig(), default_priors=custom)
        assert all(c.priors == custom for c in point.cells)
        sens = preset_design(StudyConfig(preset="sensitivity"), SamplerConfig(), default_priors=custom)
        assert not any(c.priors == custom for c in sens.cells)


class TestStudyDesign:
    def test_duplicate_labels(self):
        with pytest.raises(DomainError, match="distinct"):
            StudyDesign([_ar1_cell(), _ar1_cell()]).validate()

    def test_empty(self):
        with pytest.raises(DomainError, match="no cells"):
            StudyDesign([]).validate()

    def test_bad_min_success(self):
        with pytest.raises(DomainError):
            StudyDesign([_ar1_cell()], min_success=0.0).validate()


class TestMcExperiment:
    def test_tiny_study(self):
        design = StudyDesign([_ar1_cell()], replicates=2, sampler=FAST, thresholds=(1.05, 1.5))
        report = mc_experiment(design)
        assert report.ok
        table = report.replicates
        assert len(table) == 2
        assert table["status"].tolist() == ["ok", "ok"]
        assert table["replicate"].tolist() == [1, 2]
        assert {"nu_mean", "phi1_lower", "phi1_covered", "max_rhat", "p_lt_1.05", "p_lt_1.5"} <= set(table.columns)
        summary = report.cell(_ar1_cell().label)
        assert summary["parameter"].tolist() == ["nu", "alpha", "phi1"]
        assert summary["completed"].tolist() == [2, 2, 2]
        assert summary["coverage"].between(0.0, 1.0).all()
        assert report.roots["threshold"].tolist() == [1.05, 1.5]

    def test_replicates_reproducible(self):
        design = StudyDesign([_ar1_cell(60)], replicates=1, sampler=FAST)
        a = mc_experiment(design).replicates
        b = mc_experiment(design).replicates
        assert a["phi1_mean"].tolist() == b["phi1_mean"].tolist()

    def test_failing_cell_reported(self):
        explosive = StudyCell(ParameterVector(nu=50.0, alpha=1.0, phi=(1.5,)), 80)
        design = StudyDesign([_ar1_cell(), explosive], replicates=1, sampler=FAST)
        report = mc_experiment(design)
        assert report.failed_cells == [explosive.label]
        assert not report.ok
        failed = report.replicates[report.replicates["cell"] == explosive.label]
        assert failed["error"].iloc[0].startswith("DivergenceError")
        assert report.cell(explosive.label)["status"].eq("failed").all()

    def test_every_cell_failing(self):
        explosive = StudyCell(ParameterVector(nu=50.0, alpha=1.0, phi=(1.5,)), 80)
        with pytest.raises(EstimationError, match="every study cell failed"):
            mc_experiment(StudyDesign([explosive], replicates=1, sampler=FAST))

    def test_foreign_exception_fails_only_its_cell(self, monkeypatch):
        original = study_module.simulate_barma

        def faulty(truth, order, link, n, *args, **kwargs):
            if n == 61:
                raise FloatingPointError("overflow in simulation")
            return original(truth, order, link, n, *args, **kwargs)

        monkeypatch.setattr(study_module, "simulate_barma", faulty)
        broken = _ar1_cell(61)
        report = mc_experiment(StudyDesign([_ar1_cell(80), broken], replicates=1, sampler=FAST))
        assert report.failed_cells == [broken.label]
        failed = report.replicates[report.replicates["cell"] == broken.label]
        assert failed["status"].tolist() == ["failed"]
        assert failed["error"].iloc[0].startswith("FloatingPointError")


def _overlap(lower, upper, reference):
    ref_lower, ref_upper = reference
    shared = max(0.0, min(upper, ref_upper) - max(lower, ref_lower))
    return shared / (ref_upper - ref_lower)


@pytest.mark.slow
class TestPointRecovery:
    def test_arma11_cell(self):
        study = StudyConfig(cells=["nu50_phi0.4_theta0.4_n500"], replicates=10)
        design = preset_design(study, SamplerConfig(n_chains=2, n_iterations=2000, seed=11))
        summary = mc_experiment(design, threads=2).summary.set_index("parameter")
        assert summary.loc["nu", "mean"] == pytest.approx(49.57, abs=3.0)
        assert summary.loc["phi1", "mean"] == pytest.approx(0.40, abs=0.05)
        assert summary.loc["theta1", "mean"] == pytest.approx(0.40, abs=0.05)
        references = {"nu": (43.75, 55.79), "phi1": (0.28, 0.51), "theta1": (0.28, 0.51)}
        for name, reference in references.items():
            row = summary.loc[name]
            assert _overlap(row["lower"], row["upper"], reference) >= 0.8, name


@pytest.mark.slow
class TestUnitRootStudy:
    def test_near_unit_root_flagged(self):
        near = "nu100_phi-0.25_phi-0.95_n500"
        far = "nu100_phi0.3_phi0.1_n500"
        study = StudyConfig(preset="unitroot", cells=[near, far], replicates=5)
        design = preset_design(study, SamplerConfig(n_chains=2, n_iterations=1000, seed=13))
        report = mc_experiment(design, threads=4)
        assert report.ok
        roots = report.roots.set_index(["cell", "threshold"])["probability"]
        assert 0.75 <= roots[(near, 1.03)] <= 1.0
        assert roots[(near, 1.05)] >= 0.9
        assert (roots.loc[far] <= 0.05).all()


@pytest.mark.slow
class TestPriorSensitivity:
    def test_tight_prior_dominates_small_sample(self):
        tight = "nu50_phi0.4_theta0.6_n200_m100_v25"
        vague = "nu50_phi0.4_theta0.6_n200_m100_v2000"
        study = StudyConfig(preset="sensitivity", cells=[tight, vague], replicates=10)
        design = preset_design(study, SamplerConfig(n_chains=2, n_iterations=1000, seed=17))
        report = mc_experiment(design, threads=4)
        table = report.replicates[report.replicates["status"] == "ok"]
        pulled = table[table["cell"] == tight]
        assert ((pulled["nu_mean"] > 70.0) & (pulled["nu_lower"] > 50.0)).sum() >= 8
        summary = report.cell(vague).set_index("parameter")
        assert summary.loc["nu", "mean"] == pytest.approx(49.06, abs=5.0)
