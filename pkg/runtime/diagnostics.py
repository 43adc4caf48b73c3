"""
Convergence diagnostics: split-chain effective sample size and R-hat.

ESS uses FFT autocovariances pooled across split chains, truncated by
Geyer's initial positive sequence and smoothed by the initial monotone
sequence.  R-hat is the split-chain between/within variance ratio.  A
parameter that never moves gets NaN for both.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np
from scipy.fft import next_fast_len

from core.errors import InsufficientDrawsError
from runtime.chains import ChainDraws

logger = logging.getLogger("barma.diagnostics")

MIN_DRAWS = 10


@dataclass(frozen=True)
class Convergence:
    ess: float
    rhat: float


def _split_chains(samples: np.ndarray) -> np.ndarray:
    half = samples.shape[1] // 2
    if samples.shape[1] % 2:
        samples = samples[:, 1:]
    return np.vstack((samples[:, :half], samples[:, half:]))


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.size
    m = next_fast_len(2 * n)
    centred = x - x.mean()
    spectrum = np.fft.rfft(centred, n=m)
    acov = np.fft.irfft(spectrum * np.conjugate(spectrum), n=m)[:n]
    return acov / n


def _is_constant(samples: np.ndarray) -> bool:
    return bool(np.all(samples == samples.flat[0]))


def effective_sample_size(samples: np.ndarray) -> float:
    """Split-chain ESS for a (chains × draws) array."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[1] < 4 or _is_constant(samples) or not np.all(np.isfinite(samples)):
        return float("nan")
    samples = _split_chains(samples)
    n_chain, n_draw = samples.shape
    acov = np.array([_autocov(chain) for chain in samples])
    chain_mean = samples.mean(axis=1)
    mean_var = np.mean(acov[:, 0]) * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += np.var(chain_mean, ddof=1)
    if var_plus <= 0.0:
        return float("nan")

    rho = np.zeros(n_draw)
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - np.mean(acov[:, 1])) / var_plus
    rho[0], rho[1] = rho_even, rho_odd

    # Geyer initial positive sequence
    t = 1
    while t < n_draw - 2 and rho_even + rho_odd >= 0.0:
        rho_even = 1.0 - (mean_var - np.mean(acov[:, t + 1])) / var_plus
        rho_odd = 1.0 - (mean_var - np.mean(acov[:, t + 2])) / var_plus
        rho[t + 1] = rho_even
        if rho_even + rho_odd >= 0.0:
            rho[t + 2] = rho_odd
        t += 2
    max_t = t

    # Geyer initial monotone sequence
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2

    tau = -1.0 + 2.0 * np.sum(rho[:max_t]) + np.sum(rho[max_t + 1:max_t + 2])
    return float(n_chain * n_draw / tau)


def split_rhat(samples: np.ndarray) -> float:
    """Split-chain potential scale reduction for a (chains × draws) array."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[1] < 4 or _is_constant(samples) or not np.all(np.isfinite(samples)):
        return float("nan")
    samples = _split_chains(samples)
    n = samples.shape[1]
    between = n * np.var(samples.mean(axis=1), ddof=1)
    within = np.mean(np.var(samples, axis=1, ddof=1))
    if within <= 0.0:
        return float("nan")
    return float(np.sqrt((between / within + n - 1.0) / n))


def ess_rhat(chains: Sequence[ChainDraws]) -> Dict[str, Convergence]:
    """Per-parameter ESS and R-hat across chains (truncated to the shortest)."""
    if not chains:
        raise InsufficientDrawsError("no chains to diagnose")
    length = min(c.n_draws for c in chains)
    if length < MIN_DRAWS:
        raise InsufficientDrawsError(f"need at least {MIN_DRAWS} draws per chain, got {length}")
    names: List[str] = chains[0].names
    stacked = np.stack([c.draws[:length] for c in chains])  # chains × draws × params
    out: Dict[str, Convergence] = {}
    for j, name in enumerate(names):
        column = stacked[:, :, j]
        out[name] = Convergence(effective_sample_size(column), split_rhat(column))
    return out
