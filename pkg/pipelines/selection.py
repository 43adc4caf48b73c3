"""
Barma Selection — stepping-stone marginal likelihood and order search.

The ladder 0 = t₀ < … < t_K = 1 bridges prior and posterior through the
power posteriors π₀·L^t.  Rung k contributes

    log r_k = log mean_i L(γ_i)^{t_{k+1} − t_k},   γ_i ~ π₀·L^{t_k}

and log m(y) = Σ_k log r_k.  Rung 0 draws straight from the prior; later
rungs run NUTS initialized from the previous rung's final state and step
size.  Each rung's Monte Carlo error comes from the delta method on its
weights, with the sample size replaced by the weights' ESS for MCMC rungs.

The likelihood used along the ladder keeps clamped means finite (no
divergence guard) so that prior mass far from the data is weighted, not
discarded.

# ---- Changelog ----
# [2026-10-16] Initial creation.
#   What: LadderSpec, stepping_stone_log_ml, log_bayes_factor,
#         select_order, order_search.
# -------------------
"""

from __future__ import annotations

import dataclasses
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from core.errors import BarmaError, DomainError, EstimationError
from core.model import BarmaData, LinkFunction, ModelOrder
from core.posterior import PosteriorEvaluator, PriorSpec
from core.rng import RngStream
from runtime.chains import run_chain
from runtime.diagnostics import effective_sample_size

logger = logging.getLogger("barma.selection")

WIDE_PRIOR_VARIANCE = 1.0e6


@dataclass(frozen=True)
class LadderSpec:
    """Temperatures 0 = t₀ < t₁ < … < t_K = 1 plus per-rung sampler budget."""
    temperatures: Tuple[float, ...]
    draws_per_rung: int = 400
    warmup_per_rung: int = 100
    target_accept: float = 0.8
    max_tree_depth: int = 10

    def __post_init__(self) -> None:
        temps = tuple(float(t) for t in self.temperatures)
        object.__setattr__(self, "temperatures", temps)
        if len(temps) < 2 or temps[0] != 0.0 or temps[-1] != 1.0:
            raise DomainError(f"ladder must start at exactly 0 and end at exactly 1, got {temps}")
        if any(b <= a for a, b in zip(temps, temps[1:])):
            raise DomainError("ladder temperatures must be strictly increasing")
        if self.draws_per_rung < 2:
            raise DomainError(f"need at least 2 draws per rung, got {self.draws_per_rung}")
        if self.warmup_per_rung < 0:
            raise DomainError(f"warmup per rung must be >= 0, got {self.warmup_per_rung}")

    @classmethod
    def power(cls, rungs: int = 30, exponent: float = 5.0, **budget: int) -> "LadderSpec":
        """t_k = (k/K)^exponent, k = 0..K."""
        if rungs < 1:
            raise DomainError(f"ladder needs at least one step, got K={rungs}")
        temps = [(k / rungs) ** exponent for k in range(rungs + 1)]
        temps[-1] = 1.0
        return cls(tuple(temps), **budget)

    @property
    def steps(self) -> int:
        return len(self.temperatures) - 1


@dataclass(frozen=True)
class RungEstimate:
    index: int
    temperature: float
    next_temperature: float
    log_ratio: float
    std_error: float
    n_draws: int
    ess: float


@dataclass
class MarginalLikelihood:
    log_ml: float
    std_error: float
    rungs: List[RungEstimate] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([dataclasses.asdict(r) for r in self.rungs])


def _rung_estimate(index: int, t_now: float, t_next: float, log_lik: np.ndarray, mcmc: bool) -> RungEstimate:
    delta = t_next - t_now
    weights_log = delta * np.asarray(log_lik, dtype=float)
    n = weights_log.size
    if n == 0 or not np.any(np.isfinite(weights_log)):
        raise EstimationError(f"rung {index} (t={t_now:.3g}) has no finite likelihood values")
    log_ratio = float(logsumexp(weights_log) - math.log(n))
    w = np.exp(weights_log - np.max(weights_log))
    mean_w = float(np.mean(w))
    n_eff = float(n)
    if mcmc:
        ess = effective_sample_size(w[None, :])
        if math.isfinite(ess):
            n_eff = min(float(n), max(ess, 1.0))
    var_w = float(np.var(w, ddof=1)) if n > 1 else 0.0
    se = math.sqrt(var_w / (n_eff * mean_w * mean_w)) if mean_w > 0 else math.inf
    if not math.isfinite(log_ratio):
        raise EstimationError(f"rung {index} (t={t_now:.3g}) produced a non-finite estimate")
    return RungEstimate(index, t_now, t_next, log_ratio, se, n, n_eff)


def stepping_stone_log_ml(
    evaluator: PosteriorEvaluator,
    ladder: LadderSpec,
    rng: RngStream,
    wide_prior_variance: float = WIDE_PRIOR_VARIANCE,
) -> MarginalLikelihood:
    """log marginal likelihood and its Monte Carlo standard error."""
    width = evaluator.priors.max_normal_variance(evaluator.order)
    if width > wide_prior_variance:
        logger.warning(
            "Prior variance %.3g is very wide; Bayes factors for order %s are "
            "sensitive to this choice (Lindley-Bartlett effect)",
            width, evaluator.order.label(),
        )
    base = dataclasses.replace(evaluator, temperature=1.0, clamp_guard=False)
    temps = ladder.temperatures
    rungs: List[RungEstimate] = []

    prior_points = base.sample_prior(rng.split(0), ladder.draws_per_rung)
    log_lik = np.array([base.log_likelihood(p) for p in prior_points])
    rungs.append(_rung_estimate(0, temps[0], temps[1], log_lik, mcmc=False))

    finite = np.isfinite(log_lik)
    init = prior_points[int(np.argmax(np.where(finite, log_lik, -np.inf)))] if finite.any() else None
    step_size: Optional[float] = None
    for k in range(1, ladder.steps):
        chain = run_chain(
            base.tempered(temps[k]),
            n_warmup=ladder.warmup_per_rung,
            n_draws=ladder.draws_per_rung,
            rng=rng.split(k),
            target_accept=ladder.target_accept,
            max_depth=ladder.max_tree_depth,
            chain_id=k,
            init=init,
            initial_step_size=step_size,
            record_log_lik=True,
            min_warmup=0,
        )
        rungs.append(_rung_estimate(k, temps[k], temps[k + 1], chain.log_lik, mcmc=True))
        init = chain.final_point
        step_size = chain.step_size
        logger.debug("rung %d/%d t=%.4g log r=%.4f", k, ladder.steps - 1, temps[k], rungs[-1].log_ratio)

    log_ml = float(sum(r.log_ratio for r in rungs))
    std_error = float(math.sqrt(sum(r.std_error ** 2 for r in rungs)))
    if not math.isfinite(log_ml):
        raise EstimationError(f"log marginal likelihood for {evaluator.order.label()} is not finite")
    logger.info("Order %s: log-ML %.4f (se %.4f)", evaluator.order.label(), log_ml, std_error)
    return MarginalLikelihood(log_ml, std_error, rungs)


def log_bayes_factor(ml_a: float, ml_b: float) -> float:
    """log BF of model a against model b from their log marginal likelihoods."""
    if not (math.isfinite(ml_a) and math.isfinite(ml_b)):
        raise DomainError(f"log marginal likelihoods must be finite, got {ml_a!r}, {ml_b!r}")
    return ml_a - ml_b


# ---------------------------------------------------------------------------
# Order search
# ---------------------------------------------------------------------------

@dataclass
class OrderResult:
    p: int
    q: int
    log_ml: float = math.nan
    std_error: float = math.nan
    error: Optional[str] = None
    estimate: Optional[MarginalLikelihood] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None and math.isfinite(self.log_ml)

    @property
    def label(self) -> str:
        return f"({self.p},{self.q})"


@dataclass
class SelectionReport:
    """Per-order log-ML, pairwise log Bayes factors and the selected order."""
    results: List[OrderResult]
    selected: Tuple[int, int]

    def log_ml(self, p: int, q: int) -> float:
        for r in self.results:
            if (r.p, r.q) == (p, q):
                return r.log_ml
        raise KeyError((p, q))

    def bayes_factors(self) -> pd.DataFrame:
        ok = [r for r in self.results if r.ok]
        rows = [
            {"model_a": a.label, "model_b": b.label, "log_bayes_factor": log_bayes_factor(a.log_ml, b.log_ml)}
            for a, b in itertools.permutations(ok, 2)
        ]
        return pd.DataFrame(rows, columns=["model_a", "model_b", "log_bayes_factor"])

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "row": "order",
                "model": r.label,
                "p": r.p,
                "q": r.q,
                "log_ml": r.log_ml,
                "std_error": r.std_error,
                "status": "ok" if r.ok else f"failed: {r.error}",
            }
            for r in self.results
        ]
        p, q = self.selected
        rows.append({
            "row": "selected",
            "model": f"({p},{q})",
            "p": p,
            "q": q,
            "log_ml": self.log_ml(p, q),
            "std_error": next(r.std_error for r in self.results if (r.p, r.q) == (p, q)),
            "status": "selected",
        })
        return pd.DataFrame(rows)


def select_order(results: Sequence[OrderResult]) -> SelectionReport:
    """Pick the order with the largest log-ML among successful fits."""
    ok = [r for r in results if r.ok]
    if not ok:
        raise EstimationError("no order in the grid produced a marginal likelihood")
    best = max(ok, key=lambda r: r.log_ml)
    return SelectionReport(list(results), (best.p, best.q))


def select_from_log_mls(log_mls: Mapping[Tuple[int, int], float]) -> SelectionReport:
    """Selection from externally supplied log marginal likelihoods."""
    return select_order([OrderResult(p, q, float(v), 0.0) for (p, q), v in log_mls.items()])


def _order_task(args: Tuple[BarmaData, Tuple[int, int], PriorSpec, LinkFunction, LadderSpec, int, int, float]) -> OrderResult:
    data, (p, q), priors, link, ladder, seed, index, wide = args
    try:
        order = ModelOrder(p, q, data.covariates.r)
        evaluator = PosteriorEvaluator(data, order, priors, link)
        estimate = stepping_stone_log_ml(evaluator, ladder, RngStream(seed).split(index), wide)
        return OrderResult(p, q, estimate.log_ml, estimate.std_error, estimate=estimate)
    except BarmaError as exc:
        logger.error("order (%d,%d) failed: %s", p, q, exc)
        return OrderResult(p, q, error=f"{type(exc).__name__}: {exc}")


def order_search(
    data: BarmaData,
    grid: Sequence[Tuple[int, int]],
    priors: PriorSpec,
    ladder: LadderSpec,
    seed: int,
    link: LinkFunction = LinkFunction(),
    threads: int = 1,
    wide_prior_variance: float = WIDE_PRIOR_VARIANCE,
) -> SelectionReport:
    """Estimate log-ML for every (p,q) in ``grid`` and select the best."""
    grid = [(int(p), int(q)) for p, q in grid]
    if not grid:
        raise DomainError("order grid is empty")
    tasks = [(data, pq, priors, link, ladder, seed, i, wide_prior_variance) for i, pq in enumerate(grid)]
    workers = max(1, min(int(threads), len(tasks)))
    logger.info("Order search over %s on %d worker(s)", ", ".join(f"({p},{q})" for p, q in grid), workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_order_task, tasks))
    else:
        results = [_order_task(t) for t in tasks]
    report = select_order(results)
    logger.info("Selected order (%d,%d)", *report.selected)
    return report


def log_ml_table(report: SelectionReport) -> Dict[str, float]:
    return {r.label: r.log_ml for r in report.results}
