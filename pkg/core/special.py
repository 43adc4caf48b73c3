"""
Log-gamma and digamma, vectorized and dual-aware.

log Γ uses the Lanczos approximation (g = 7, nine coefficients) with the
reflection formula below 1/2.  ψ shifts its argument upward by the
recurrence ψ(x) = ψ(x+1) − 1/x until x > 6, then sums the asymptotic
series.  Both accept floats, numpy arrays, or Duals; a Dual argument
gets its derivative from the next function down the chain
(log Γ' = ψ).
"""

from __future__ import annotations

import math
from typing import Any

import numpy as np

from core.dual import Dual

LANCZOS_G = 7.0
LANCZOS_COEFFICIENTS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)
_LOG_PI = math.log(math.pi)

DIGAMMA_SHIFT = 6.0

# Bernoulli-number coefficients B_2k / (2k) of the asymptotic ψ series,
# applied to successive powers of 1/x².
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)


def _scalar_or_array(out: np.ndarray, like: Any) -> Any:
    return float(out) if np.ndim(like) == 0 else out


def _lanczos(z: np.ndarray) -> np.ndarray:
    """log Γ(z) for z ≥ 1/2."""
    x = z - 1.0
    series = np.full_like(x, LANCZOS_COEFFICIENTS[0])
    for i, coef in enumerate(LANCZOS_COEFFICIENTS[1:], start=1):
        series = series + coef / (x + i)
    t = x + LANCZOS_G + 0.5
    return _HALF_LOG_TWO_PI + (x + 0.5) * np.log(t) - t + np.log(series)


def _lgamma(x: Any) -> Any:
    arr = np.asarray(x, dtype=float)
    small = arr < 0.5
    z = np.where(small, 1.0 - arr, arr)
    core = _lanczos(z)
    if np.any(small):
        with np.errstate(divide="ignore"):
            reflected = _LOG_PI - np.log(np.abs(np.sin(math.pi * arr))) - core
        core = np.where(small, reflected, core)
    return _scalar_or_array(core, x)


def _digamma(x: Any) -> Any:
    z = np.array(x, dtype=float, ndmin=1)
    acc = np.zeros_like(z)
    below = z < DIGAMMA_SHIFT
    while np.any(below):
        acc[below] -= 1.0 / z[below]
        z[below] += 1.0
        below = z < DIGAMMA_SHIFT
    inv2 = 1.0 / (z * z)
    tail = np.zeros_like(z)
    for coef in reversed(_DIGAMMA_SERIES):
        tail = inv2 * (coef + tail)
    out = acc + np.log(z) - 0.5 / z - tail
    return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))


def lgamma(x: Any) -> Any:
    """log Γ(x) for x > 0 (reflection handles 0 < x < 1/2)."""
    if isinstance(x, Dual):
        return x.chain(_lgamma(x.val), _digamma(x.val))
    return _lgamma(x)


def digamma(x: Any) -> Any:
    """ψ(x) = d/dx log Γ(x) for x > 0.  Duals are not propagated past ψ."""
    if isinstance(x, Dual):
        raise TypeError("digamma does not propagate derivatives")
    return _digamma(x)
