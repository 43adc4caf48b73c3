"""
Barma Model — the βARMA(p,q) observation model.

Y_t given the past is Beta with mean μ_t and precision ν; the mean
follows an ARMA-like recursion on the link scale:

    g(μ_t) = α + X_t'β + Σ_i φ_i (g(y_{t-i}) − X_{t-i}'β) + Σ_j θ_j r_{t-j}
    r_t    = g(y_t) − g(μ_t)

Pre-sample terms (t − i < 1, t − j < 1) are zero.  The inverse link is
clamped to [EPS_MU, 1 − EPS_MU]; a clamped step has zero derivative.

The recursion in ``systematic_component`` is written once and runs on
floats for plain evaluation or on Duals for the gradient.

# ---- Changelog ----
# [2026-10-16] Initial creation.
#   What: Series/covariate/order/parameter types, logit and cloglog links,
#         beta log-density, conditional variance, the mean filter and the
#         long-run location.
#   How:  AR and covariate terms are built as whole-series array
#         operations; only the MA feedback loops over t.
# -------------------
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from core.dual import Dual, shift, stack, value_of
from core.errors import DimensionError, DivergenceError, DomainError, SingularityError
from core.special import lgamma

logger = logging.getLogger("barma.model")

EPS_MU = 1e-12
SINGULARITY_TOL = 1e-12


# ---------------------------------------------------------------------------
# Link functions
# ---------------------------------------------------------------------------

class LinkKind(str, Enum):
    LOGIT = "logit"
    CLOGLOG = "cloglog"


@dataclass(frozen=True)
class LinkFunction:
    """Strictly increasing map (0,1) → ℝ with clamped inverse."""
    kind: LinkKind = LinkKind.LOGIT

    @classmethod
    def from_name(cls, name: str) -> "LinkFunction":
        try:
            return cls(LinkKind(str(name).lower()))
        except ValueError:
            raise DomainError(
                f"unknown link {name!r}; expected one of "
                f"{', '.join(k.value for k in LinkKind)}"
            ) from None

    @property
    def name(self) -> str:
        return self.kind.value

    def forward(self, x: Any) -> Any:
        """g(x); x strictly inside (0,1)."""
        arr = np.asarray(x, dtype=float)
        if np.any(~(arr > 0.0) | ~(arr < 1.0)):
            raise DomainError(f"link argument must lie in (0,1), got {x!r}")
        if self.kind is LinkKind.LOGIT:
            out = np.log(arr) - np.log1p(-arr)
        else:
            out = np.log(-np.log1p(-arr))
        return float(out) if out.ndim == 0 else out

    def derivative(self, x: Any) -> Any:
        """g'(x)."""
        arr = np.asarray(x, dtype=float)
        if self.kind is LinkKind.LOGIT:
            out = 1.0 / (arr * (1.0 - arr))
        else:
            out = -1.0 / ((1.0 - arr) * np.log1p(-arr))
        return float(out) if out.ndim == 0 else out

    def _raw_inverse(self, eta: np.ndarray) -> np.ndarray:
        if self.kind is LinkKind.LOGIT:
            return expit(eta)
        return -np.expm1(-np.exp(eta))

    def _inverse_slope(self, eta: np.ndarray, mu: np.ndarray) -> np.ndarray:
        if self.kind is LinkKind.LOGIT:
            return mu * (1.0 - mu)
        return np.exp(eta - np.exp(eta))

    def inverse(self, eta: Any) -> Any:
        """g⁻¹(η) clamped to [EPS_MU, 1 − EPS_MU]; Duals carry dμ/dη."""
        raw = value_of(eta)
        arr = np.asarray(raw, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise DomainError("inverse link needs a finite linear predictor")
        with np.errstate(over="ignore"):
            mu = np.clip(self._raw_inverse(arr), EPS_MU, 1.0 - EPS_MU)
            if isinstance(eta, Dual):
                inside = (mu > EPS_MU) & (mu < 1.0 - EPS_MU)
                slope = np.where(inside, self._inverse_slope(arr, mu), 0.0)
                return eta.chain(mu if mu.ndim else float(mu), slope)
        return float(mu) if mu.ndim == 0 else mu


def link_eval(link: LinkFunction, x: Any) -> Any:
    return link.forward(x)


def link_inverse(link: LinkFunction, eta: Any) -> Any:
    return link.inverse(eta)


def is_clamped(mu: Any) -> Any:
    return (np.asarray(mu) <= EPS_MU) | (np.asarray(mu) >= 1.0 - EPS_MU)


# ---------------------------------------------------------------------------
# Data and parameter types
# ---------------------------------------------------------------------------

def _frozen_array(values: Any, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    """Observed series y_1..y_n, every value strictly inside (0,1)."""
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = _frozen_array(self.values, 1)
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionError("series must be a non-empty one-dimensional sequence")
        bad = np.flatnonzero(~((arr > 0.0) & (arr < 1.0)))
        if bad.size:
            rows = ", ".join(str(i + 1) for i in bad[:20])
            raise DomainError(
                f"series values must lie strictly inside (0,1); offending positions: {rows}"
            )
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)

    def transformed(self, link: LinkFunction) -> np.ndarray:
        return np.asarray(link.forward(self.values))

    def head(self, n: int) -> "ObservationSeries":
        return ObservationSeries(self.values[:n])

    def tail(self, n: int) -> "ObservationSeries":
        return ObservationSeries(self.values[-n:])


@dataclass(frozen=True, eq=False)
class CovariateMatrix:
    """n × r exogenous regressors plus an optional block of future rows."""
    values: np.ndarray
    future: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise DimensionError("covariates must be a two-dimensional table")
        if not np.all(np.isfinite(arr)):
            raise DomainError("covariates must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if self.future is not None:
            fut = np.array(self.future, dtype=float)
            if fut.ndim == 1:
                fut = fut[:, None] if arr.shape[1] == 1 else fut[None, :]
            if fut.ndim != 2 or fut.shape[1] != arr.shape[1]:
                raise DimensionError(
                    f"future covariates need {arr.shape[1]} columns, got shape {fut.shape}"
                )
            if not np.all(np.isfinite(fut)):
                raise DomainError("future covariates must be finite")
            fut.setflags(write=False)
            object.__setattr__(self, "future", fut)

    @classmethod
    def empty(cls, n: int) -> "CovariateMatrix":
        return cls(np.zeros((n, 0)))

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def r(self) -> int:
        return int(self.values.shape[1])

    def head(self, n: int) -> "CovariateMatrix":
        return CovariateMatrix(self.values[:n])

    def with_future(self, future: np.ndarray) -> "CovariateMatrix":
        return CovariateMatrix(self.values, future)


@dataclass(frozen=True)
class ModelOrder:
    """AR order p, MA order q, covariate count r."""
    p: int = 0
    q: int = 0
    r: int = 0

    def __post_init__(self) -> None:
        for name in ("p", "q", "r"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise DomainError(f"order {name} must be a nonnegative integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    @property
    def dim(self) -> int:
        return self.p + self.q + self.r + 2

    @property
    def start(self) -> int:
        """m = max(p, q): observations conditioned on, not modelled."""
        return max(self.p, self.q)

    def parameter_names(self) -> List[str]:
        return (
            ["nu", "alpha"]
            + [f"beta{k}" for k in range(1, self.r + 1)]
            + [f"phi{i}" for i in range(1, self.p + 1)]
            + [f"theta{j}" for j in range(1, self.q + 1)]
        )

    def slices(self) -> Tuple[slice, slice, slice]:
        """Positions of β, φ, θ in the flattened (ν, α, β, φ, θ) layout."""
        b0 = 2
        f0 = b0 + self.r
        t0 = f0 + self.p
        return slice(b0, f0), slice(f0, t0), slice(t0, t0 + self.q)

    def label(self) -> str:
        return f"({self.p},{self.q})"


@dataclass(frozen=True)
class ParameterVector:
    """γ = (ν, α, β, φ, θ)."""
    nu: float
    alpha: float = 0.0
    beta: Tuple[float, ...] = ()
    phi: Tuple[float, ...] = ()
    theta: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "alpha", float(self.alpha))
        for name in ("beta", "phi", "theta"):
            object.__setattr__(self, name, tuple(float(v) for v in np.ravel(getattr(self, name))))
        if not self.nu > 0.0:
            raise DomainError(f"precision nu must be positive, got {self.nu!r}")
        if not np.all(np.isfinite(self.flatten())):
            raise DomainError("parameter entries must be finite")

    @property
    def order(self) -> ModelOrder:
        return ModelOrder(len(self.phi), len(self.theta), len(self.beta))

    def flatten(self) -> np.ndarray:
        return np.array(
            (self.nu, self.alpha) + self.beta + self.phi + self.theta, dtype=float
        )

    @classmethod
    def from_flat(cls, values: Sequence[float], order: ModelOrder) -> "ParameterVector":
        values = np.asarray(values, dtype=float).ravel()
        if values.size != order.dim:
            raise DimensionError(
                f"order {order.label()} with r={order.r} needs {order.dim} values, got {values.size}"
            )
        sb, sp, st = order.slices()
        return cls(values[0], values[1], values[sb], values[sp], values[st])

    def check_order(self, order: ModelOrder) -> None:
        if self.order != order:
            raise DimensionError(
                f"parameters have (p,q,r)=({len(self.phi)},{len(self.theta)},{len(self.beta)}), "
                f"model expects ({order.p},{order.q},{order.r})"
            )

    def to_dict(self) -> dict:
        order = self.order
        return dict(zip(order.parameter_names(), self.flatten().tolist()))


@dataclass(frozen=True, eq=False)
class BarmaData:
    """Series plus aligned covariates, the data a posterior is bound to."""
    series: ObservationSeries
    covariates: CovariateMatrix = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.covariates is None:
            object.__setattr__(self, "covariates", CovariateMatrix.empty(len(self.series)))
        if self.covariates.n != len(self.series):
            raise DimensionError(
                f"covariates have {self.covariates.n} rows, series has {len(self.series)}"
            )

    @property
    def n(self) -> int:
        return len(self.series)


@dataclass
class FilterOutput:
    """Conditional means, errors and linear predictor from one filter pass."""
    mu: np.ndarray
    resid: np.ndarray
    eta: np.ndarray
    start: int
    clamped: np.ndarray

    @property
    def clamped_fraction(self) -> float:
        tail = self.clamped[self.start:]
        return float(tail.mean()) if tail.size else 0.0


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

def _beta_logpdf(y: Any, mu: Any, nu: Any) -> Any:
    """Unchecked mean/precision beta log-density; mu and nu may be Duals."""
    a = nu * mu
    b = nu * (1.0 - mu)
    return (
        lgamma(nu) - lgamma(a) - lgamma(b)
        + (a - 1.0) * np.log(y) + (b - 1.0) * np.log1p(-np.asarray(y, dtype=float))
    )


def _check_open_unit(name: str, value: Any) -> None:
    arr = np.asarray(value, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError(f"{name} must lie strictly inside (0,1), got {value!r}")


def _check_positive(name: str, value: Any) -> None:
    arr = np.asarray(value, dtype=float)
    if np.any(~(arr > 0.0)) or not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be positive and finite, got {value!r}")


def beta_log_density(y: Any, mu: Any, nu: Any) -> Any:
    """log f(y | μ, ν) for the Beta(νμ, ν(1−μ)) law."""
    _check_open_unit("y", y)
    _check_open_unit("mu", mu)
    _check_positive("nu", nu)
    out = _beta_logpdf(np.asarray(y, dtype=float), np.asarray(mu, dtype=float), np.asarray(nu, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def conditional_variance(mu: Any, nu: Any) -> Any:
    """Var(Y_t | past) = μ(1−μ)/(1+ν)."""
    _check_open_unit("mu", mu)
    _check_positive("nu", nu)
    out = np.asarray(mu, dtype=float) * (1.0 - np.asarray(mu, dtype=float)) / (1.0 + np.asarray(nu, dtype=float))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Mean recursion
# ---------------------------------------------------------------------------

def systematic_component(
    alpha: Any,
    beta: Sequence[Any],
    phi: Sequence[Any],
    theta: Sequence[Any],
    gy: np.ndarray,
    X: np.ndarray,
    link: LinkFunction,
) -> Tuple[Any, Any, np.ndarray]:
    """Run the mean recursion; returns (eta, mu, clamped mask).

    Parameters may be floats or Duals.  Raises DivergenceError on a
    non-finite linear predictor.
    """
    n = gy.shape[0]
    xb: Any = np.zeros(n)
    for k, b in enumerate(beta):
        xb = xb + b * X[:, k]
    c: Any = xb + alpha
    if len(phi):
        centred = gy - xb
        for i, ph in enumerate(phi, start=1):
            c = c + ph * shift(centred, i)

    with np.errstate(over="ignore", invalid="ignore"):
        if not len(theta):
            eta = c
            if not np.all(np.isfinite(value_of(eta))):
                raise DivergenceError("non-finite linear predictor in mean recursion")
        else:
            etas: List[Any] = []
            resid: List[Any] = []
            for t in range(n):
                eta_t = c[t]
                for j, th in enumerate(theta, start=1):
                    if t >= j:
                        eta_t = eta_t + th * resid[t - j]
                v = float(value_of(eta_t))
                if not math.isfinite(v):
                    raise DivergenceError(f"non-finite linear predictor at t={t + 1}")
                mu_t = link.inverse(v)
                if mu_t <= EPS_MU or mu_t >= 1.0 - EPS_MU:
                    resid.append(gy[t] - link.forward(mu_t))
                else:
                    resid.append(gy[t] - eta_t)
                etas.append(eta_t)
            eta = stack(etas)

    mu = link.inverse(eta)
    return eta, mu, is_clamped(value_of(mu))


def _check_filter_inputs(
    params: ParameterVector,
    series: ObservationSeries,
    covariates: Optional[CovariateMatrix],
    order: ModelOrder,
) -> CovariateMatrix:
    params.check_order(order)
    if covariates is None:
        covariates = CovariateMatrix.empty(len(series))
    if covariates.n != len(series) or covariates.r != order.r:
        raise DimensionError(
            f"covariates are {covariates.n}x{covariates.r}, expected {len(series)}x{order.r}"
        )
    return covariates


def filter_recursion(
    params: ParameterVector,
    series: ObservationSeries,
    covariates: Optional[CovariateMatrix],
    order: ModelOrder,
    link: LinkFunction,
) -> FilterOutput:
    """μ_t and r_t for t = 1..n under ``params``."""
    covariates = _check_filter_inputs(params, series, covariates, order)
    gy = series.transformed(link)
    eta, mu, clamped = systematic_component(
        params.alpha, params.beta, params.phi, params.theta, gy, covariates.values, link
    )
    eta = np.asarray(eta, dtype=float)
    mu = np.asarray(mu, dtype=float)
    g_mu = eta.copy()
    if clamped.any():
        g_mu[clamped] = link.forward(mu[clamped])
    resid = gy - g_mu
    if clamped.any():
        logger.debug("%d of %d means clamped at the boundary", int(clamped.sum()), clamped.size)
    return FilterOutput(mu=mu, resid=resid, eta=eta, start=order.start, clamped=clamped)


def long_run_location(alpha: float, phi: Sequence[float]) -> float:
    """ω = α / (1 − Σφ_i)."""
    denom = 1.0 - float(np.sum(phi)) if len(phi) else 1.0
    if abs(denom) < SINGULARITY_TOL:
        raise SingularityError(
            f"AR polynomial vanishes at z=1 (1 - sum(phi) = {denom:.3g}); long-run location undefined"
        )
    return float(alpha) / denom
