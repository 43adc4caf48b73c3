"""
Random streams and variate generation.

``RngStream`` wraps numpy's PCG64 bit generator seeded through a
``SeedSequence``.  ``split(i)`` derives child i from the parent's seed and
spawn key alone, so a child's sequence depends only on (seed, path) and
never on how many siblings were drawn before it.

Normal variates come from ``Generator.standard_normal`` (ziggurat).
Gamma variates use the Marsaglia–Tsang squeeze method, with the
U^{1/a} boost for shape a < 1; beta variates are X/(X+Y).
"""

from __future__ import annotations

from typing import Any, Optional, Tuple, Union

import numpy as np

from core.errors import DomainError

SEED_MASK = (1 << 64) - 1

# Open-interval guards for beta draws.
BETA_FLOOR = np.finfo(float).tiny
BETA_CEIL = 1.0 - np.finfo(float).epsneg

Shape = Union[int, Tuple[int, ...], None]


class RngStream:
    """Seeded 64-bit stream with deterministic splitting."""

    def __init__(self, seed: int, path: Tuple[int, ...] = ()) -> None:
        self._seed = int(seed) & SEED_MASK
        self._path = tuple(int(i) for i in path)
        seq = np.random.SeedSequence(entropy=self._seed, spawn_key=self._path)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def path(self) -> Tuple[int, ...]:
        return self._path

    def split(self, index: int) -> "RngStream":
        if index < 0:
            raise DomainError(f"split index must be nonnegative, got {index}")
        return RngStream(self._seed, self._path + (int(index),))

    # Thin delegates so callers never reach for the generator directly.

    def uniform(self, low: float = 0.0, high: float = 1.0, size: Shape = None) -> Any:
        return self.generator.uniform(low, high, size)

    def random(self, size: Shape = None) -> Any:
        return self.generator.random(size)

    def standard_normal(self, size: Shape = None) -> Any:
        return self.generator.standard_normal(size)

    def normal(self, scale: Any = 1.0, size: Shape = None) -> Any:
        return scale * self.generator.standard_normal(size)

    def gamma(self, shape: Any, size: Shape = None) -> Any:
        return draw_gamma(shape, self, size)

    def beta(self, mu: Any, nu: Any) -> Any:
        return draw_beta(mu, nu, self)

    def __repr__(self) -> str:
        return f"RngStream(seed={self._seed}, path={self._path})"


def draw_gamma(shape: Any, rng: RngStream, size: Shape = None) -> Any:
    """Gamma(shape, 1) variates by Marsaglia–Tsang."""
    a = np.asarray(shape, dtype=float)
    if size is not None:
        a = np.broadcast_to(a, size)
    if np.any(~(a > 0.0)) or not np.all(np.isfinite(a)):
        raise DomainError(f"gamma shape must be positive and finite, got {shape!r}")
    flat = a.ravel()
    boost = flat < 1.0
    d = np.where(boost, flat + 1.0, flat) - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty_like(flat)
    pending = np.ones(flat.size, dtype=bool)
    gen = rng.generator
    while pending.any():
        idx = np.flatnonzero(pending)
        x = gen.standard_normal(idx.size)
        u = gen.random(idx.size)
        v = (1.0 + c[idx] * x) ** 3
        positive = v > 0.0
        x2 = x * x
        squeeze = u < 1.0 - 0.0331 * x2 * x2
        with np.errstate(divide="ignore", invalid="ignore"):
            log_test = np.log(u) < 0.5 * x2 + d[idx] * (1.0 - v + np.log(np.where(positive, v, 1.0)))
        accept = positive & (squeeze | log_test)
        hit = idx[accept]
        out[hit] = d[hit] * v[accept]
        pending[hit] = False
    if boost.any():
        with np.errstate(under="ignore"):
            out[boost] *= gen.random(int(boost.sum())) ** (1.0 / flat[boost])
    out = out.reshape(a.shape)
    return float(out) if out.ndim == 0 else out


def draw_beta(mu: Any, nu: Any, rng: RngStream) -> Any:
    """Beta(νμ, ν(1−μ)) variates, clamped into the open unit interval."""
    mu_arr = np.asarray(mu, dtype=float)
    nu_arr = np.asarray(nu, dtype=float)
    if np.any(~((mu_arr > 0.0) & (mu_arr < 1.0))):
        raise DomainError(f"beta mean must lie in (0,1), got {mu!r}")
    if np.any(~(nu_arr > 0.0)):
        raise DomainError(f"beta precision must be positive, got {nu!r}")
    mu_arr, nu_arr = np.broadcast_arrays(mu_arr, nu_arr)
    x = np.asarray(draw_gamma(nu_arr * mu_arr, rng, mu_arr.shape if mu_arr.ndim else None))
    y = np.asarray(draw_gamma(nu_arr * (1.0 - mu_arr), rng, mu_arr.shape if mu_arr.ndim else None))
    total = x + y
    with np.errstate(invalid="ignore"):
        out = np.where(total > 0.0, x / np.where(total > 0.0, total, 1.0), mu_arr)
    out = np.clip(out, BETA_FLOOR, BETA_CEIL)
    return float(out) if out.ndim == 0 else out


def as_stream(rng: Optional[Union[RngStream, int]]) -> RngStream:
    """Accept a stream or a bare seed."""
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        raise DomainError("a seed or RngStream is required")
    return RngStream(int(rng))
