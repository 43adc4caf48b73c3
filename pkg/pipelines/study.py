"""
Barma Study — Monte Carlo experiments on simulated βARMA data.

A design is a list of cells (true parameters, sample size, prior) and a
replicate count.  Every replicate simulates a series with burn-in, fits it
with NUTS and records posterior means, credible intervals, coverage of the
truth and, for models with an AR part, quasi-unit-root probabilities.

Replicate (c, k) draws from ``RngStream(seed).split(c).split(k)``, so its
result does not depend on the worker count or on which other cells run.
A cell succeeds when at least ``min_success`` of its replicates complete.

Presets:
    point        βARMA(1,1), eight (φ,θ) pairs × ν ∈ {50,100} × n ∈ {200,500}
    unitroot     βARMA(2,0), ν=100, n=500, eleven φ pairs near and far from the unit circle
    sensitivity  βARMA(1,1), n=200, two (φ,θ) pairs × ν ∈ {50,100} × the 3×3 prior grid for ν

# ---- Changelog ----
# [2026-10-16] Initial creation.
#   What: StudyCell/StudyDesign, the three presets, prior grid, mc_experiment.
#   How:  Replicates fan out over a process pool; aggregation filters the
#         replicate table by cell label, so result order never matters.
# -------------------
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.config import DEFAULT_THRESHOLDS, AnalysisConfig, SamplerConfig, StudyConfig
from core.errors import BarmaError, DomainError, EstimationError
from core.model import BarmaData, LinkFunction, ModelOrder, ParameterVector
from core.posterior import PosteriorEvaluator, PriorSpec
from core.rng import RngStream
from pipelines.analysis import DECISION_THRESHOLD, summarize_draws, unit_root_probability
from pipelines.simulate import DEFAULT_BURN_IN, simulate_barma
from runtime.chains import run_chains

logger = logging.getLogger("barma.study")

POINT_PAIRS = [(0.4, 0.4), (0.4, 0.6), (0.6, 0.4), (0.6, 0.6),
               (-0.5, -0.3), (-0.5, -0.4), (-0.3, -0.3), (-0.3, -0.4)]
UNITROOT_PAIRS = [(-0.25, -0.95), (-0.15, 0.80), (0.20, 0.75), (-0.30, -0.90),
                  (-0.10, 0.80), (0.40, 0.50), (0.10, 0.80), (-0.90, -0.60),
                  (0.10, -0.30), (0.30, 0.10), (0.60, -0.10)]
SENSITIVITY_PAIRS = [(0.4, 0.6), (-0.3, -0.3)]
PRIOR_MEANS = (1.0, 50.0, 100.0)
PRIOR_VARIANCES = (2000.0, 500.0, 25.0)


def prior_grid() -> List[Tuple[str, PriorSpec]]:
    """The 3×3 grid of gamma priors for ν, labelled ``m<mean>_v<variance>``."""
    return [
        (f"m{mean:g}_v{variance:g}", PriorSpec.from_mean_var(mean, variance))
        for mean in PRIOR_MEANS
        for variance in PRIOR_VARIANCES
    ]


# ---------------------------------------------------------------------------
# Design
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StudyCell:
    truth: ParameterVector
    n: int
    priors: PriorSpec = PriorSpec()
    prior_label: str = "default"

    @property
    def order(self) -> ModelOrder:
        return self.truth.order

    @property
    def label(self) -> str:
        parts = [f"nu{self.truth.nu:g}"]
        parts += [f"phi{v:g}" for v in self.truth.phi]
        parts += [f"theta{v:g}" for v in self.truth.theta]
        parts.append(f"n{self.n}")
        if self.prior_label != "default":
            parts.append(self.prior_label)
        return "_".join(parts)


@dataclass
class StudyDesign:
    """Cells × replicates plus the fitting and reporting settings."""
    cells: List[StudyCell]
    replicates: int = 10
    burn_in: int = DEFAULT_BURN_IN
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    link: LinkFunction = LinkFunction()
    level: float = 0.95
    thresholds: Sequence[float] = tuple(DEFAULT_THRESHOLDS)
    decision_threshold: float = DECISION_THRESHOLD
    min_success: float = 0.8
    seed: int = 20240101
    name: str = "custom"

    def validate(self) -> "StudyDesign":
        if not self.cells:
            raise DomainError("study design has no cells")
        if self.replicates < 1:
            raise DomainError(f"replicate count must be >= 1, got {self.replicates}")
        if self.burn_in < 0:
            raise DomainError(f"burn-in must be >= 0, got {self.burn_in}")
        if not 0.0 < self.min_success <= 1.0:
            raise DomainError(f"min_success must lie in (0,1], got {self.min_success}")
        labels = [c.label for c in self.cells]
        if len(set(labels)) != len(labels):
            raise DomainError("study cells must have distinct labels")
        self.sampler.validate()
        return self


def _point_cells() -> List[StudyCell]:
    return [
        StudyCell(ParameterVector(nu=nu, alpha=0.0, phi=(phi,), theta=(theta,)), n)
        for nu in (50.0, 100.0)
        for n in (200, 500)
        for phi, theta in POINT_PAIRS
    ]


def _unitroot_cells() -> List[StudyCell]:
    return [StudyCell(ParameterVector(nu=100.0, alpha=0.0, phi=pair), 500) for pair in UNITROOT_PAIRS]


def _sensitivity_cells() -> List[StudyCell]:
    return [
        StudyCell(ParameterVector(nu=nu, alpha=0.0, phi=(phi,), theta=(theta,)), 200, spec, label)
        for nu in (50.0, 100.0)
        for phi, theta in SENSITIVITY_PAIRS
        for label, spec in prior_grid()
    ]


_PRESETS = {
    "point": _point_cells,
    "unitroot": _unitroot_cells,
    "sensitivity": _sensitivity_cells,
}


def preset_design(
    study: StudyConfig,
    sampler: SamplerConfig,
    analysis: Optional[AnalysisConfig] = None,
    link: LinkFunction = LinkFunction(),
    default_priors: Optional[PriorSpec] = None,
) -> StudyDesign:
    """Build a named preset, optionally narrowed to ``study.cells``."""
    analysis = analysis or AnalysisConfig()
    if study.preset not in _PRESETS:
        raise DomainError(f"unknown study preset {study.preset!r}; expected one of {', '.join(_PRESETS)}")
    cells = _PRESETS[study.preset]()
    if default_priors is not None:
        cells = [c if c.prior_label != "default" else dataclasses.replace(c, priors=default_priors) for c in cells]
    if study.cells:
        wanted = set(study.cells)
        known = {c.label for c in cells}
        missing = sorted(wanted - known)
        if missing:
            raise DomainError(f"preset {study.preset!r} has no cell(s) {', '.join(missing)}")
        cells = [c for c in cells if c.label in wanted]
    return StudyDesign(
        cells=cells,
        replicates=study.effective_replicates,
        burn_in=study.burn_in,
        sampler=sampler,
        link=link,
        level=analysis.level,
        thresholds=tuple(analysis.thresholds),
        decision_threshold=analysis.decision_threshold,
        min_success=study.min_success,
        seed=sampler.seed,
        name=study.preset,
    ).validate()


# ---------------------------------------------------------------------------
# Replicates
# ---------------------------------------------------------------------------

def _replicate_task(args: Tuple[StudyDesign, int, int]) -> Dict[str, Any]:
    design, cell_index, replicate = args
    cell = design.cells[cell_index]
    rng = RngStream(design.seed).split(cell_index).split(replicate)
    row: Dict[str, Any] = {"cell": cell.label, "replicate": replicate + 1, "n": cell.n, "prior": cell.prior_label}
    try:
        series = simulate_barma(cell.truth, cell.order, design.link, cell.n, design.burn_in, rng=rng.split(0))
        chain_seed = int(rng.split(1).generator.integers(0, 2 ** 63 - 1))
        evaluator = PosteriorEvaluator(BarmaData(series), cell.order, cell.priors, design.link)
        chains = run_chains(evaluator, dataclasses.replace(design.sampler, seed=chain_seed), threads=1)
        summary = summarize_draws(chains, design.level)
        for name, truth in cell.truth.to_dict().items():
            s = summary[name]
            row[f"{name}_mean"] = s.mean
            row[f"{name}_lower"] = s.lower
            row[f"{name}_upper"] = s.upper
            row[f"{name}_covered"] = bool(s.lower <= truth <= s.upper)
        row["max_rhat"] = float(np.nanmax([s.rhat for s in summary.rows])) if summary.rows else math.nan
        row["divergent"] = sum(c.n_divergent for c in chains)
        if cell.order.p:
            report = unit_root_probability(chains, cell.order, design.thresholds, design.decision_threshold)
            for threshold, prob in zip(report.thresholds, report.probabilities):
                row[f"p_lt_{threshold:g}"] = prob
        row["status"] = "ok"
    except Exception as exc:  # noqa: BLE001
        if not isinstance(exc, BarmaError):
            logger.debug("cell %s replicate %d raised", cell.label, replicate + 1, exc_info=True)
        logger.error("cell %s replicate %d failed: %s", cell.label, replicate + 1, exc)
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


@dataclass
class StudyReport:
    """Replicate table (one row per cell × replicate) and per-cell aggregates."""
    replicates: pd.DataFrame
    summary: pd.DataFrame
    roots: pd.DataFrame
    failed_cells: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed_cells

    def cell(self, label: str) -> pd.DataFrame:
        return self.summary[self.summary["cell"] == label]


def _aggregate(design: StudyDesign, table: pd.DataFrame) -> Tuple[pd.DataFrame, pd.DataFrame, List[str]]:
    summary_rows: List[Dict[str, Any]] = []
    root_rows: List[Dict[str, Any]] = []
    failed: List[str] = []
    for cell in design.cells:
        rows = table[table["cell"] == cell.label]
        done = rows[rows["status"] == "ok"]
        success = len(done) / design.replicates
        status = "ok" if success >= design.min_success else "failed"
        if status == "failed":
            failed.append(cell.label)
            logger.error(
                "cell %s: only %d of %d replicates completed", cell.label, len(done), design.replicates
            )
        for name, truth in cell.truth.to_dict().items():
            have = not done.empty and f"{name}_mean" in done
            summary_rows.append({
                "cell": cell.label,
                "n": cell.n,
                "prior": cell.prior_label,
                "parameter": name,
                "truth": truth,
                "mean": float(done[f"{name}_mean"].mean()) if have else math.nan,
                "lower": float(done[f"{name}_lower"].mean()) if have else math.nan,
                "upper": float(done[f"{name}_upper"].mean()) if have else math.nan,
                "coverage": float(done[f"{name}_covered"].astype(float).mean()) if have else math.nan,
                "completed": len(done),
                "replicates": design.replicates,
                "status": status,
            })
        if cell.order.p:
            for threshold in design.thresholds:
                column = f"p_lt_{threshold:g}"
                root_rows.append({
                    "cell": cell.label,
                    "threshold": float(threshold),
                    "probability": float(done[column].mean()) if (not done.empty and column in done) else math.nan,
                    "completed": len(done),
                })
    roots = pd.DataFrame(root_rows, columns=["cell", "threshold", "probability", "completed"])
    return pd.DataFrame(summary_rows), roots, failed


def mc_experiment(design: StudyDesign, threads: int = 1) -> StudyReport:
    """Simulate, fit and summarize every cell × replicate of ``design``."""
    design.validate()
    tasks = [(design, c, k) for c in range(len(design.cells)) for k in range(design.replicates)]
    workers = max(1, min(int(threads), len(tasks)))
    logger.info(
        "Study %s: %d cell(s) x %d replicate(s) on %d worker(s)",
        design.name, len(design.cells), design.replicates, workers,
    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_replicate_task, tasks))
    else:
        rows = [_replicate_task(t) for t in tasks]

    table = pd.DataFrame(rows)
    if "error" not in table:
        table["error"] = ""
    table["error"] = table["error"].fillna("")
    summary, roots, failed = _aggregate(design, table)
    if len(failed) == len(design.cells):
        raise EstimationError(f"every study cell failed ({len(failed)} of {len(design.cells)})")
    logger.info("Study %s finished: %d cell(s) ok, %d failed", design.name, len(design.cells) - len(failed), len(failed))
    return StudyReport(table, summary, roots, failed)
