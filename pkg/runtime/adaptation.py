"""
Step-size adaptation: initial heuristic plus dual averaging.

The initial step doubles or halves until a single leapfrog step's
acceptance probability crosses 1/2.  Dual averaging then drives the mean
NUTS acceptance statistic to the target during warmup; the averaged
iterate is frozen for sampling.
"""

from __future__ import annotations

import logging
import math
from typing import Optional, Tuple

from core.config import MIN_WARMUP
from core.errors import AdaptationError, ConfigError
from core.rng import RngStream
from runtime.sampler import PhaseState, Target, hamiltonian, leapfrog, nuts_transition

logger = logging.getLogger("barma.adaptation")

MIN_STEP_SIZE = 1e-10
MAX_STEP_SIZE = 1e7
_LOG_HALF = math.log(0.5)


class DualAveraging:
    """Nesterov dual averaging on log ε (γ=0.05, t₀=10, κ=0.75, μ=log 10ε₀)."""

    def __init__(
        self,
        initial_step_size: float,
        target_accept: float = 0.8,
        gamma: float = 0.05,
        t0: float = 10.0,
        kappa: float = 0.75,
    ) -> None:
        self.target_accept = target_accept
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.mu = math.log(10.0 * initial_step_size)
        self.log_step = math.log(initial_step_size)
        self.log_step_avg = 0.0
        self.h_bar = 0.0
        self.t = 0

    def update(self, accept_stat: float) -> float:
        """Feed one acceptance statistic; returns the next working step size."""
        self.t += 1
        eta = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target_accept - accept_stat)
        self.log_step = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        weight = self.t ** (-self.kappa)
        self.log_step_avg = weight * self.log_step + (1.0 - weight) * self.log_step_avg
        return math.exp(self.log_step)

    @property
    def step_size(self) -> float:
        return math.exp(self.log_step)

    @property
    def final_step_size(self) -> float:
        return math.exp(self.log_step_avg)


def _log_accept(start: PhaseState, step_size: float, target: Target) -> float:
    moved = leapfrog(start, step_size, target)
    h = hamiltonian(moved)
    return hamiltonian(start) - h if math.isfinite(h) else -math.inf


def find_reasonable_step_size(
    state: PhaseState,
    target: Target,
    rng: RngStream,
    step_size: float = 1.0,
) -> float:
    """Double or halve ε until one leapfrog step's acceptance crosses 1/2."""
    start = state.with_momentum(rng.standard_normal(state.position.size))
    log_accept = _log_accept(start, step_size, target)
    direction = 1.0 if log_accept > _LOG_HALF else -1.0
    while True:
        step_size *= 2.0 ** direction
        if step_size < MIN_STEP_SIZE:
            raise AdaptationError(f"initial step size underflowed below {MIN_STEP_SIZE:g}")
        if step_size > MAX_STEP_SIZE:
            return MAX_STEP_SIZE
        log_accept = _log_accept(start, step_size, target)
        if direction > 0 and not log_accept > _LOG_HALF:
            return step_size
        if direction < 0 and log_accept > _LOG_HALF:
            return step_size


def adapt_warmup(
    target: Target,
    state: PhaseState,
    n_warmup: int,
    rng: RngStream,
    target_accept: float = 0.8,
    max_depth: int = 10,
    initial_step_size: Optional[float] = None,
    min_warmup: int = MIN_WARMUP,
) -> Tuple[float, PhaseState]:
    """Run ``n_warmup`` adapting transitions; returns (frozen ε, last state).

    ``initial_step_size`` skips the doubling/halving heuristic, as when a
    tempered rung starts from its predecessor's step size.
    """
    if n_warmup < min_warmup:
        raise ConfigError(f"warmup needs at least {min_warmup} iterations, got {n_warmup}")
    if initial_step_size is None:
        initial_step_size = find_reasonable_step_size(state, target, rng)
    if n_warmup == 0:
        return initial_step_size, state
    logger.debug("initial step size %.4g", initial_step_size)
    averager = DualAveraging(initial_step_size, target_accept)
    step_size = initial_step_size
    for _ in range(n_warmup):
        state, info = nuts_transition(state, step_size, target, rng, max_depth)
        step_size = averager.update(info.accept_stat)
        if step_size < MIN_STEP_SIZE:
            raise AdaptationError(f"step size collapsed to {step_size:.3g} during warmup")
    final = averager.final_step_size
    if final < MIN_STEP_SIZE or not math.isfinite(final):
        raise AdaptationError(f"adapted step size {final:.3g} is unusable")
    return final, state
