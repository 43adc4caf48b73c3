"""
Barma Sampler — Hamiltonian dynamics and the No-U-Turn transition.

Potential energy is U(q) = −log π(q); with an identity mass matrix the
Hamiltonian is H(q, κ) = U(q) + ½κ'κ.  The transition is the multinomial
NUTS variant: the trajectory doubles in a random direction until the ends
make a U-turn, a subtree diverges, or the depth cap is reached.  Samples
inside a subtree are chosen uniformly-progressively by weight exp(−H);
the top level uses biased progressive sampling.

Any target exposing ``dim`` and ``value_and_grad(q) -> (log π, ∇ log π)``
can be sampled; the posterior evaluator is one such target.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Protocol, Sequence, Tuple

import numpy as np

from core.rng import RngStream

logger = logging.getLogger("barma.sampler")

DIVERGENCE_THRESHOLD = 1000.0


class Target(Protocol):
    dim: int

    def value_and_grad(self, point: Sequence[float]) -> Tuple[float, np.ndarray]: ...


# ---------------------------------------------------------------------------
# Phase space
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PhaseState:
    """Position, momentum and the log density / gradient cached at position."""
    position: np.ndarray
    momentum: np.ndarray
    log_density: float
    grad: np.ndarray
    divergent: bool = False

    @classmethod
    def at(cls, target: Target, position: Sequence[float], momentum: Sequence[float] = None) -> "PhaseState":
        position = np.array(position, dtype=float)
        if momentum is None:
            momentum = np.zeros_like(position)
        value, grad = target.value_and_grad(position)
        return cls(position, np.array(momentum, dtype=float), float(value), np.asarray(grad, dtype=float))

    def with_momentum(self, momentum: np.ndarray) -> "PhaseState":
        return dataclasses.replace(self, momentum=np.asarray(momentum, dtype=float), divergent=False)

    @property
    def potential(self) -> float:
        return -self.log_density


def hamiltonian(state: PhaseState) -> float:
    """U(q) + ½κ'κ; +inf where the log density is −inf."""
    if not math.isfinite(state.log_density):
        return math.inf
    return -state.log_density + 0.5 * float(np.dot(state.momentum, state.momentum))


def leapfrog(state: PhaseState, step_size: float, target: Target) -> PhaseState:
    """One half-full-half leapfrog step; flags |ΔH| > DIVERGENCE_THRESHOLD."""
    half = state.momentum + 0.5 * step_size * state.grad
    position = state.position + step_size * half
    value, grad = target.value_and_grad(position)
    grad = np.asarray(grad, dtype=float)
    if not math.isfinite(value):
        return PhaseState(position, half, -math.inf, grad, divergent=True)
    momentum = half + 0.5 * step_size * grad
    new = PhaseState(position, momentum, float(value), grad)
    h_old = hamiltonian(state)
    h_new = hamiltonian(new)
    if not math.isfinite(h_new) or abs(h_new - h_old) > DIVERGENCE_THRESHOLD:
        new = dataclasses.replace(new, divergent=True)
    return new


def _is_turning(left: PhaseState, right: PhaseState) -> bool:
    span = right.position - left.position
    return float(np.dot(span, left.momentum)) < 0.0 or float(np.dot(span, right.momentum)) < 0.0


# ---------------------------------------------------------------------------
# Tree building
# ---------------------------------------------------------------------------

@dataclass
class _Subtree:
    left: PhaseState
    right: PhaseState
    proposal: PhaseState
    log_weight: float
    turning: bool
    diverged: bool
    accept_sum: float
    n_steps: int


@dataclass(frozen=True)
class TransitionInfo:
    accept_stat: float
    tree_depth: int
    divergent: bool
    n_leapfrog: int


def _build_tree(
    state: PhaseState,
    direction: int,
    depth: int,
    step_size: float,
    h0: float,
    target: Target,
    rng: RngStream,
) -> _Subtree:
    if depth == 0:
        new = leapfrog(state, direction * step_size, target)
        h = hamiltonian(new)
        if math.isfinite(h):
            log_weight = h0 - h
            accept = math.exp(min(0.0, log_weight))
            diverged = (h - h0) > DIVERGENCE_THRESHOLD
        else:
            log_weight = -math.inf
            accept = 0.0
            diverged = True
        return _Subtree(new, new, new, log_weight, False, diverged, accept, 1)

    inner = _build_tree(state, direction, depth - 1, step_size, h0, target, rng)
    if inner.turning or inner.diverged:
        return inner
    edge = inner.right if direction > 0 else inner.left
    outer = _build_tree(edge, direction, depth - 1, step_size, h0, target, rng)

    if direction > 0:
        left, right = inner.left, outer.right
    else:
        left, right = outer.left, inner.right
    log_weight = float(np.logaddexp(inner.log_weight, outer.log_weight))
    proposal = inner.proposal
    if outer.log_weight > -math.inf and math.log(rng.random()) < outer.log_weight - log_weight:
        proposal = outer.proposal
    return _Subtree(
        left=left,
        right=right,
        proposal=proposal,
        log_weight=log_weight,
        turning=outer.turning or _is_turning(left, right),
        diverged=outer.diverged,
        accept_sum=inner.accept_sum + outer.accept_sum,
        n_steps=inner.n_steps + outer.n_steps,
    )


def nuts_transition(
    state: PhaseState,
    step_size: float,
    target: Target,
    rng: RngStream,
    max_depth: int = 10,
) -> Tuple[PhaseState, TransitionInfo]:
    """One NUTS transition from ``state`` (its momentum is resampled).

    The trajectory always doubles at least once, so ``max_depth=0`` is a
    single leapfrog step with a Metropolis correction.
    """
    start = state.with_momentum(rng.standard_normal(state.position.size))
    h0 = hamiltonian(start)
    left = right = proposal = start
    log_weight = 0.0
    depth = 0
    divergent = False
    accept_sum = 0.0
    n_steps = 0

    while True:
        direction = 1 if rng.random() < 0.5 else -1
        if direction > 0:
            sub = _build_tree(right, 1, depth, step_size, h0, target, rng)
            right = sub.right
        else:
            sub = _build_tree(left, -1, depth, step_size, h0, target, rng)
            left = sub.left
        accept_sum += sub.accept_sum
        n_steps += sub.n_steps
        if sub.diverged:
            divergent = True
            break
        if sub.turning:
            break
        if math.log(rng.random()) < sub.log_weight - log_weight:
            proposal = sub.proposal
        log_weight = float(np.logaddexp(log_weight, sub.log_weight))
        depth += 1
        if _is_turning(left, right) or depth >= max_depth:
            break

    info = TransitionInfo(
        accept_stat=accept_sum / max(n_steps, 1),
        tree_depth=depth,
        divergent=divergent,
        n_leapfrog=n_steps,
    )
    return dataclasses.replace(proposal, divergent=divergent), info
