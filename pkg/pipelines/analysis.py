"""
Barma Analysis — posterior summaries, polynomial roots, unit-root report.

The AR characteristic polynomial is φ(z) = 1 − φ₁z − … − φ_p z^p and the
MA one θ(z) = 1 + θ₁z + … + θ_q z^q.  Roots of degree ≤ 2 come from the
closed form; higher degrees use Aberth–Ehrlich simultaneous iteration
seeded on the circle of radius |c₀/c_p|^{1/p}.

The posterior quasi-unit-root probability at threshold c is the share of
draws whose smallest AR root modulus lies below c; 1.05 is the decision
threshold.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import gaussian_kde

from core.config import DEFAULT_THRESHOLDS
from core.errors import ConvergenceError, DomainError, InsufficientDrawsError
from core.model import ModelOrder
from runtime.chains import ChainDraws, pooled
from runtime.diagnostics import MIN_DRAWS, ess_rhat

logger = logging.getLogger("barma.analysis")

ROOT_TOL = 1e-10
MAX_ROOT_ITERATIONS = 200
TRAILING_TOL = 1e-12
DECISION_THRESHOLD = 1.05


# ---------------------------------------------------------------------------
# Posterior summary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParameterSummary:
    name: str
    mean: float
    median: float
    sd: float
    lower: float
    upper: float
    ess: float
    rhat: float


@dataclass
class PosteriorSummary:
    """Per-parameter summary at credible level ``level``."""
    level: float
    rows: List[ParameterSummary]
    n_draws: int
    n_chains: int

    def __getitem__(self, name: str) -> ParameterSummary:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    @property
    def names(self) -> List[str]:
        return [row.name for row in self.rows]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "parameter": r.name,
                    "mean": r.mean,
                    "median": r.median,
                    "sd": r.sd,
                    "lower": r.lower,
                    "upper": r.upper,
                    "ess": r.ess,
                    "rhat": r.rhat,
                }
                for r in self.rows
            ]
        )


def summarize_draws(chains: Sequence[ChainDraws], level: float = 0.95) -> PosteriorSummary:
    """Pool post-warmup draws; equal-tailed type-7 quantile intervals."""
    if not 0.0 < level < 1.0:
        raise DomainError(f"credible level must lie in (0,1), got {level!r}")
    draws = pooled(chains)
    if draws.shape[0] < MIN_DRAWS:
        raise InsufficientDrawsError(f"need at least {MIN_DRAWS} draws to summarize, got {draws.shape[0]}")
    tail = (1.0 - level) / 2.0
    try:
        diagnostics = ess_rhat(chains)
    except InsufficientDrawsError:
        diagnostics = {}
    rows = []
    for j, name in enumerate(chains[0].names):
        column = draws[:, j]
        lower, median, upper = np.quantile(column, [tail, 0.5, 1.0 - tail])
        diag = diagnostics.get(name)
        rows.append(ParameterSummary(
            name=name,
            mean=float(np.mean(column)),
            median=float(median),
            sd=float(np.std(column, ddof=1)) if column.size > 1 else 0.0,
            lower=float(lower),
            upper=float(upper),
            ess=diag.ess if diag else math.nan,
            rhat=diag.rhat if diag else math.nan,
        ))
    return PosteriorSummary(level=level, rows=rows, n_draws=int(draws.shape[0]), n_chains=len(chains))


# ---------------------------------------------------------------------------
# Polynomial roots
# ---------------------------------------------------------------------------

def _strip_trailing(coeffs: np.ndarray) -> np.ndarray:
    """Drop highest-degree coefficients with magnitude below TRAILING_TOL."""
    end = coeffs.size
    while end > 1 and abs(coeffs[end - 1]) < TRAILING_TOL:
        end -= 1
    return coeffs[:end]


def _aberth(coeffs: np.ndarray) -> np.ndarray:
    """Roots of Σ c_k z^k (ascending coefficients, degree ≥ 1)."""
    degree = coeffs.size - 1
    descending = coeffs[::-1].astype(complex)
    derivative = np.polyder(descending)
    radius = abs(coeffs[0] / coeffs[-1]) ** (1.0 / degree)
    # Offset angle keeps seeds off the real axis so conjugate pairs can separate.
    angles = 2.0 * np.pi * np.arange(degree) / degree + 0.4
    z = radius * np.exp(1j * angles)
    for _ in range(MAX_ROOT_ITERATIONS):
        ratio = np.polyval(descending, z) / np.polyval(derivative, z)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        repulsion = np.sum(1.0 / diff, axis=1) - 1.0  # drop the diagonal's 1/1
        step = ratio / (1.0 - ratio * repulsion)
        z = z - step
        if np.all(np.abs(step) <= ROOT_TOL * (1.0 + np.abs(z))):
            return z
    raise ConvergenceError(f"Aberth iteration did not converge in {MAX_ROOT_ITERATIONS} iterations")


def polynomial_roots(coeffs: Sequence[float]) -> np.ndarray:
    """Complex roots of c₀ + c₁z + … (ascending order, trailing ≈0 stripped)."""
    c = _strip_trailing(np.asarray(coeffs, dtype=float))
    degree = c.size - 1
    if degree < 1:
        return np.empty(0, dtype=complex)
    if degree == 1:
        return np.array([-c[0] / c[1]], dtype=complex)
    if degree == 2:
        disc = np.sqrt(complex(c[1] * c[1] - 4.0 * c[2] * c[0]))
        return np.array([(-c[1] + disc) / (2.0 * c[2]), (-c[1] - disc) / (2.0 * c[2])])
    return _aberth(c)


def ar_polynomial(phi: Sequence[float]) -> np.ndarray:
    return np.concatenate(([1.0], -np.asarray(phi, dtype=float)))


def ma_polynomial(theta: Sequence[float]) -> np.ndarray:
    return np.concatenate(([1.0], np.asarray(theta, dtype=float)))


def _min_modulus(coeffs: np.ndarray) -> float:
    roots = polynomial_roots(coeffs)
    return float(np.min(np.abs(roots))) if roots.size else math.inf


def ar_min_root_modulus(phi: Sequence[float]) -> float:
    """Smallest |z| with φ(z) = 0; +inf when no AR term survives stripping."""
    return _min_modulus(ar_polynomial(phi))


def ma_min_root_modulus(theta: Sequence[float]) -> float:
    """Smallest |z| with θ(z) = 0; +inf for an empty MA part."""
    return _min_modulus(ma_polynomial(theta))


# ---------------------------------------------------------------------------
# Unit-root report
# ---------------------------------------------------------------------------

@dataclass
class RootReport:
    """Per-draw minimum AR root modulus and threshold probabilities."""
    moduli: np.ndarray
    thresholds: List[float]
    probabilities: List[float]
    decision_threshold: float = DECISION_THRESHOLD
    ma_moduli: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def decision_probability(self) -> float:
        """P(min modulus < decision threshold)."""
        return float(np.mean(self.moduli < self.decision_threshold))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"threshold": self.thresholds, "probability": self.probabilities})
        frame["decision"] = [t == self.decision_threshold for t in self.thresholds]
        return frame

    def moduli_summary(self) -> Dict[str, float]:
        finite = self.moduli[np.isfinite(self.moduli)]
        out = {
            "ar_min_modulus_mean": float(np.mean(finite)) if finite.size else math.inf,
            "ar_min_modulus_median": float(np.median(finite)) if finite.size else math.inf,
        }
        if self.ma_moduli is not None:
            ma = self.ma_moduli[np.isfinite(self.ma_moduli)]
            out["ma_min_modulus_median"] = float(np.median(ma)) if ma.size else math.inf
        return out


def _columns(chains: Sequence[ChainDraws], prefix: str, count: int) -> np.ndarray:
    draws = pooled(chains)
    names = chains[0].names
    idx = [names.index(f"{prefix}{i}") for i in range(1, count + 1)]
    return draws[:, idx]


def unit_root_probability(
    chains: Sequence[ChainDraws],
    order: ModelOrder,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    decision_threshold: float = DECISION_THRESHOLD,
) -> RootReport:
    """Share of posterior draws whose AR polynomial has a root inside each threshold."""
    thresholds = [float(t) for t in thresholds]
    if not thresholds or any(t < 1.0 for t in thresholds) or thresholds != sorted(thresholds):
        raise DomainError(f"thresholds must be sorted values >= 1, got {thresholds}")
    if not chains:
        raise InsufficientDrawsError("no draws supplied")
    phi = _columns(chains, "phi", order.p)
    moduli = np.array([ar_min_root_modulus(row) for row in phi]) if order.p else np.full(phi.shape[0], math.inf)
    ma_moduli = None
    if order.q:
        theta = _columns(chains, "theta", order.q)
        ma_moduli = np.array([ma_min_root_modulus(row) for row in theta])
    probabilities = [float(np.mean(moduli < t)) for t in thresholds]
    logger.debug("unit-root probabilities %s at thresholds %s", probabilities, thresholds)
    return RootReport(moduli, thresholds, probabilities, decision_threshold, ma_moduli)


# ---------------------------------------------------------------------------
# Tidy plotting tables
# ---------------------------------------------------------------------------

def draws_frame(chains: Sequence[ChainDraws]) -> pd.DataFrame:
    frames = []
    for chain in chains:
        frame = pd.DataFrame(chain.draws, columns=chain.names)
        frame.insert(0, "iteration", np.arange(1, chain.n_draws + 1))
        frame.insert(0, "chain", chain.chain_id + 1)
        frame["accept_stat"] = chain.accept_stat
        frame["tree_depth"] = chain.tree_depth
        frame["divergent"] = chain.divergent.astype(int)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def density_grid(chains: Sequence[ChainDraws], points: int = 256) -> pd.DataFrame:
    """Gaussian-kernel density of each parameter on an evenly spaced grid."""
    draws = pooled(chains)
    rows = []
    for j, name in enumerate(chains[0].names):
        column = draws[:, j]
        lo, hi = float(column.min()), float(column.max())
        if not hi > lo:
            continue
        pad = 0.1 * (hi - lo)
        grid = np.linspace(lo - pad, hi + pad, points)
        density = gaussian_kde(column)(grid)
        rows.append(pd.DataFrame({"parameter": name, "x": grid, "density": density}))
    if not rows:
        return pd.DataFrame(columns=["parameter", "x", "density"])
    return pd.concat(rows, ignore_index=True)


def thin_trace(chains: Sequence[ChainDraws], every: int = 1) -> pd.DataFrame:
    """Long-format trace keeping every ``every``-th draw of each chain."""
    frames = []
    for chain in chains:
        idx = np.arange(0, chain.n_draws, max(1, every))
        wide = pd.DataFrame(chain.draws[idx], columns=chain.names)
        wide["chain"] = chain.chain_id + 1
        wide["iteration"] = idx + 1
        frames.append(wide.melt(id_vars=["chain", "iteration"], var_name="parameter", value_name="value"))
    return pd.concat(frames, ignore_index=True)
