"""
Barma Posterior — partial likelihood, priors and the unconstrained target.

The sampler works on the unconstrained point (ζ, α, β, φ, θ) with
ζ = log ν.  ``PosteriorEvaluator`` binds data, order, priors and link into
an immutable object exposing ``log_density`` and ``value_and_grad``; the
gradient is exact, obtained by pushing Duals through the same recursion
that computes the value.

A tempered evaluator (temperature t in [0,1]) targets prior × likelihood^t,
which is what the stepping-stone ladder samples.  ``fixed_nu`` drops ζ from
the state and holds ν at a known value.

# ---- Changelog ----
# [2026-10-16] Initial creation.
#   What: PriorSpec, gamma-prior moment matching, log prior, partial
#         likelihood, unconstrained log posterior and gradient.
#   Why:  ν is sampled as ζ = log ν with the +ζ Jacobian so HMC moves in ℝ^d.
# -------------------
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from core.dual import Dual, exp, value_of
from core.errors import DimensionError, DivergenceError, DomainError
from core.model import (
    BarmaData,
    CovariateMatrix,
    LinkFunction,
    ModelOrder,
    ObservationSeries,
    ParameterVector,
    _beta_logpdf,
    systematic_component,
)
from core.rng import RngStream, draw_gamma
from core.special import lgamma

logger = logging.getLogger("barma.posterior")

# Share of conditioned terms allowed to sit on the μ clamp before the
# likelihood is declared divergent.
MAX_CLAMPED_FRACTION = 0.10

FLAT_VARIANCE = 20000.0 ** 2

_LOG_TWO_PI = math.log(2.0 * math.pi)
_LOG_TWO = math.log(2.0)


class AlphaPrior(str, Enum):
    NORMAL = "normal"
    UNIFORM = "uniform"


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------

def gamma_prior_from_mean_var(mean: float, variance: float) -> Tuple[float, float]:
    """(shape, rate) of the gamma law with the given mean and variance."""
    if not (mean > 0.0 and variance > 0.0) or not math.isfinite(mean * variance):
        raise DomainError(
            f"gamma prior needs positive mean and variance, got mean={mean!r}, variance={variance!r}"
        )
    return mean * mean / variance, mean / variance


@dataclass(frozen=True)
class PriorSpec:
    """ν ~ Gamma(shape, rate); α normal or Uniform(−1,1); β, φ, θ zero-mean normals."""
    nu_shape: float = 5.0
    nu_rate: float = 0.1
    alpha_prior: AlphaPrior = AlphaPrior.NORMAL
    sigma2_alpha: float = FLAT_VARIANCE
    sigma2_beta: float = FLAT_VARIANCE
    sigma2_phi: float = FLAT_VARIANCE
    sigma2_theta: float = FLAT_VARIANCE

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "alpha_prior", AlphaPrior(self.alpha_prior))
        except ValueError:
            raise DomainError(
                f"alpha prior must be 'normal' or 'uniform', got {self.alpha_prior!r}"
            ) from None
        for name in ("nu_shape", "nu_rate", "sigma2_alpha", "sigma2_beta",
                     "sigma2_phi", "sigma2_theta"):
            value = float(getattr(self, name))
            if not (value > 0.0 and math.isfinite(value)):
                raise DomainError(f"prior hyper-parameter {name} must be positive and finite, got {value!r}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_mean_var(cls, mean: float, variance: float, **kwargs: Any) -> "PriorSpec":
        shape, rate = gamma_prior_from_mean_var(mean, variance)
        return cls(nu_shape=shape, nu_rate=rate, **kwargs)

    @property
    def nu_mean(self) -> float:
        return self.nu_shape / self.nu_rate

    def max_normal_variance(self, order: ModelOrder) -> float:
        widths = [self.sigma2_alpha] if self.alpha_prior is AlphaPrior.NORMAL else []
        if order.r:
            widths.append(self.sigma2_beta)
        if order.p:
            widths.append(self.sigma2_phi)
        if order.q:
            widths.append(self.sigma2_theta)
        return max(widths) if widths else 0.0

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["alpha_prior"] = self.alpha_prior.value
        return out


def _normal_logpdf(x: Any, variance: float) -> Any:
    return -0.5 * (_LOG_TWO_PI + math.log(variance)) - (x * x) / (2.0 * variance)


def _alpha_logpdf(alpha: Any, priors: PriorSpec) -> Any:
    if priors.alpha_prior is AlphaPrior.UNIFORM:
        return -_LOG_TWO if abs(float(value_of(alpha))) < 1.0 else -math.inf
    return _normal_logpdf(alpha, priors.sigma2_alpha)


def _prior_terms(
    nu: Any,
    log_nu: Any,
    alpha: Any,
    beta: Sequence[Any],
    phi: Sequence[Any],
    theta: Sequence[Any],
    priors: PriorSpec,
    include_nu: bool = True,
) -> Any:
    total: Any = _alpha_logpdf(alpha, priors)
    if include_nu:
        a, b = priors.nu_shape, priors.nu_rate
        total = total + (a * math.log(b) - float(lgamma(a)) + (a - 1.0) * log_nu - b * nu)
    for values, variance in ((beta, priors.sigma2_beta),
                             (phi, priors.sigma2_phi),
                             (theta, priors.sigma2_theta)):
        for v in values:
            total = total + _normal_logpdf(v, variance)
    return total


def log_prior(params: ParameterVector, priors: PriorSpec) -> float:
    """log π(γ) on the constrained scale."""
    return float(_prior_terms(
        params.nu, math.log(params.nu), params.alpha,
        params.beta, params.phi, params.theta, priors,
    ))


# ---------------------------------------------------------------------------
# Likelihood
# ---------------------------------------------------------------------------

def _partial_loglik(
    nu: Any,
    alpha: Any,
    beta: Sequence[Any],
    phi: Sequence[Any],
    theta: Sequence[Any],
    y: np.ndarray,
    gy: np.ndarray,
    X: np.ndarray,
    start: int,
    link: LinkFunction,
    guard: bool = True,
) -> Any:
    """Σ_{t>m} log f(y_t | μ_t, ν).

    With ``guard`` on, −inf when the μ clamp is hit on more than
    MAX_CLAMPED_FRACTION of the conditioned terms.
    """
    _, mu, clamped = systematic_component(alpha, beta, phi, theta, gy, X, link)
    tail = clamped[start:]
    if guard and tail.size and tail.mean() > MAX_CLAMPED_FRACTION:
        return -math.inf
    if start >= y.size:
        return 0.0
    terms = _beta_logpdf(y[start:], mu[start:], nu)
    if isinstance(terms, Dual):
        return terms.sum()
    return float(np.sum(terms))


def log_partial_likelihood(
    params: ParameterVector,
    series: ObservationSeries,
    covariates: Optional[CovariateMatrix],
    order: ModelOrder,
    link: LinkFunction,
) -> float:
    """Conditional log-likelihood of y_{m+1..n} given the first m values."""
    params.check_order(order)
    if covariates is None:
        covariates = CovariateMatrix.empty(len(series))
    if covariates.n != len(series) or covariates.r != order.r:
        raise DimensionError(
            f"covariates are {covariates.n}x{covariates.r}, expected {len(series)}x{order.r}"
        )
    return float(_partial_loglik(
        params.nu, params.alpha, params.beta, params.phi, params.theta,
        series.values, series.transformed(link), covariates.values, order.start, link,
    ))


# ---------------------------------------------------------------------------
# Unconstrained posterior
# ---------------------------------------------------------------------------

def to_unconstrained(params: ParameterVector) -> np.ndarray:
    point = params.flatten()
    point[0] = math.log(point[0])
    return point


def from_unconstrained(point: Sequence[float], order: ModelOrder) -> ParameterVector:
    values = np.array(point, dtype=float)
    if values.size != order.dim:
        raise DimensionError(f"point has {values.size} coordinates, order needs {order.dim}")
    values[0] = math.exp(values[0])
    return ParameterVector.from_flat(values, order)


@dataclass(frozen=True, eq=False)
class PosteriorEvaluator:
    """Log posterior and gradient bound to one data set."""
    data: BarmaData
    order: ModelOrder
    priors: PriorSpec = PriorSpec()
    link: LinkFunction = LinkFunction()
    temperature: float = 1.0
    fixed_nu: Optional[float] = None
    clamp_guard: bool = True

    def __post_init__(self) -> None:
        if self.data.covariates.r != self.order.r:
            raise DimensionError(
                f"data carry {self.data.covariates.r} covariates, order expects r={self.order.r}"
            )
        if not 0.0 <= self.temperature <= 1.0:
            raise DomainError(f"temperature must lie in [0,1], got {self.temperature!r}")
        if self.fixed_nu is not None and not self.fixed_nu > 0.0:
            raise DomainError(f"fixed nu must be positive, got {self.fixed_nu!r}")
        object.__setattr__(self, "_y", self.data.series.values)
        object.__setattr__(self, "_gy", self.data.series.transformed(self.link))

    # -- layout ------------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.order.dim - (1 if self.fixed_nu is not None else 0)

    @property
    def names(self) -> List[str]:
        return self.order.parameter_names()

    def constrain(self, point: Sequence[float]) -> np.ndarray:
        """Unconstrained point → flattened (ν, α, β, φ, θ)."""
        point = np.asarray(point, dtype=float)
        if self.fixed_nu is not None:
            return np.concatenate(([self.fixed_nu], point))
        out = point.copy()
        out[0] = math.exp(out[0])
        return out

    def constrain_many(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.fixed_nu is not None:
            return np.column_stack((np.full(points.shape[0], self.fixed_nu), points))
        out = points.copy()
        out[:, 0] = np.exp(out[:, 0])
        return out

    def to_params(self, point: Sequence[float]) -> ParameterVector:
        return ParameterVector.from_flat(self.constrain(point), self.order)

    def to_point(self, params: ParameterVector) -> np.ndarray:
        params.check_order(self.order)
        flat = to_unconstrained(params)
        return flat[1:] if self.fixed_nu is not None else flat

    def tempered(self, temperature: float) -> "PosteriorEvaluator":
        return dataclasses.replace(self, temperature=float(temperature))

    # -- evaluation --------------------------------------------------------

    def _unpack(self, coords: Sequence[Any]) -> Tuple[Any, Any, Any, Any, Any, Any]:
        sb, sp, st = self.order.slices()
        if self.fixed_nu is None:
            zeta = coords[0]
            nu = exp(zeta)
            rest = coords
        else:
            zeta = None
            nu = self.fixed_nu
            rest = [None] + list(coords)
        return zeta, nu, rest[1], rest[sb], rest[sp], rest[st]

    def _parts(self, coords: Sequence[Any]) -> Tuple[Any, Any]:
        zeta, nu, alpha, beta, phi, theta = self._unpack(coords)
        prior = _prior_terms(
            nu, zeta, alpha, beta, phi, theta, self.priors,
            include_nu=self.fixed_nu is None,
        )
        if zeta is not None:
            prior = prior + zeta
        if math.isinf(float(value_of(prior))):
            return prior, -math.inf
        try:
            loglik = _partial_loglik(
                nu, alpha, beta, phi, theta, self._y, self._gy,
                self.data.covariates.values, self.order.start, self.link,
                self.clamp_guard,
            )
        except DivergenceError as exc:
            logger.debug("likelihood diverged: %s", exc)
            return prior, -math.inf
        return prior, loglik

    def _check_point(self, point: Any) -> np.ndarray:
        point = np.asarray(point, dtype=float).ravel()
        if point.size != self.dim:
            raise DimensionError(f"point has {point.size} coordinates, evaluator expects {self.dim}")
        return point

    def log_likelihood(self, point: Sequence[float]) -> float:
        """Untempered log partial likelihood at an unconstrained point."""
        point = self._check_point(point)
        if not np.all(np.isfinite(point)):
            return -math.inf
        zeta, nu, alpha, beta, phi, theta = self._unpack(point)
        try:
            value = _partial_loglik(
                nu, alpha, beta, phi, theta, self._y, self._gy,
                self.data.covariates.values, self.order.start, self.link,
                self.clamp_guard,
            )
        except DivergenceError:
            return -math.inf
        value = float(value)
        return value if not math.isnan(value) else -math.inf

    def log_prior_density(self, point: Sequence[float]) -> float:
        """Prior on the unconstrained scale, Jacobian included."""
        point = self._check_point(point)
        zeta, nu, alpha, beta, phi, theta = self._unpack(point)
        prior = _prior_terms(
            nu, zeta, alpha, beta, phi, theta, self.priors,
            include_nu=self.fixed_nu is None,
        )
        return float(prior + zeta) if zeta is not None else float(prior)

    def log_density(self, point: Sequence[float]) -> float:
        point = self._check_point(point)
        if not np.all(np.isfinite(point)):
            return -math.inf
        prior, loglik = self._parts(point)
        total = float(value_of(prior)) + self._scaled(loglik)
        return total if math.isfinite(total) else -math.inf

    def _scaled(self, loglik: Any) -> float:
        value = float(value_of(loglik))
        if self.temperature == 0.0:
            return 0.0 if value > -math.inf else -math.inf
        return self.temperature * value

    def value_and_grad(self, point: Sequence[float]) -> Tuple[float, np.ndarray]:
        """(log density, gradient); (−inf, 0) marks a divergent point."""
        point = self._check_point(point)
        zeros = np.zeros(self.dim)
        if not np.all(np.isfinite(point)):
            return -math.inf, zeros
        prior, loglik = self._parts(Dual.variables(point))
        if not math.isfinite(float(value_of(loglik))) or not math.isfinite(float(value_of(prior))):
            return -math.inf, zeros
        total = prior + self.temperature * loglik if self.temperature else prior
        if not isinstance(total, Dual):
            return float(total), zeros
        grad = np.array(total.eps, dtype=float)
        value = float(total.val)
        if not (math.isfinite(value) and np.all(np.isfinite(grad))):
            logger.debug("non-finite gradient at %s", point)
            return -math.inf, zeros
        return value, grad

    # -- starting points and prior draws -----------------------------------

    def initial_point(self, rng: RngStream) -> np.ndarray:
        """ζ at log(prior mean of ν); everything else uniform(−0.5, 0.5)."""
        point = rng.uniform(-0.5, 0.5, self.dim)
        if self.fixed_nu is None:
            point[0] = math.log(self.priors.nu_mean)
        return point

    def sample_prior(self, rng: RngStream, size: int) -> np.ndarray:
        """``size`` independent prior draws on the unconstrained scale."""
        cols = []
        if self.fixed_nu is None:
            nu = np.asarray(draw_gamma(self.priors.nu_shape, rng, (size,))) / self.priors.nu_rate
            cols.append(np.log(np.maximum(nu, np.finfo(float).tiny)))
        if self.priors.alpha_prior is AlphaPrior.UNIFORM:
            cols.append(rng.uniform(-1.0, 1.0, size))
        else:
            cols.append(rng.normal(math.sqrt(self.priors.sigma2_alpha), size))
        for count, variance in ((self.order.r, self.priors.sigma2_beta),
                                (self.order.p, self.priors.sigma2_phi),
                                (self.order.q, self.priors.sigma2_theta)):
            for _ in range(count):
                cols.append(rng.normal(math.sqrt(variance), size))
        return np.column_stack(cols)


def log_posterior_unconstrained(
    point: Sequence[float],
    data: BarmaData,
    priors: PriorSpec,
    order: ModelOrder,
    link: LinkFunction,
) -> float:
    return PosteriorEvaluator(data, order, priors, link).log_density(point)


def grad_log_posterior(
    point: Sequence[float],
    data: BarmaData,
    priors: PriorSpec,
    order: ModelOrder,
    link: LinkFunction,
) -> np.ndarray:
    value, grad = PosteriorEvaluator(data, order, priors, link).value_and_grad(point)
    if not math.isfinite(value):
        raise DivergenceError("log posterior is not finite at the requested point")
    return grad
