"""Analytic log densities for exercising the sampler without the model."""

from typing import List, Tuple

import numpy as np

from core.rng import RngStream


class StandardNormalTarget:
    """N(0, I_d)."""

    def __init__(self, dim: int = 2) -> None:
        self.dim = dim

    @property
    def names(self) -> List[str]:
        return [f"x{i + 1}" for i in range(self.dim)]

    def log_density(self, point) -> float:
        x = np.asarray(point, dtype=float)
        return float(-0.5 * x @ x)

    def value_and_grad(self, point) -> Tuple[float, np.ndarray]:
        x = np.asarray(point, dtype=float)
        return float(-0.5 * x @ x), -x

    def initial_point(self, rng: RngStream) -> np.ndarray:
        return rng.uniform(-0.5, 0.5, self.dim)

    def constrain_many(self, points: np.ndarray) -> np.ndarray:
        return np.atleast_2d(points).copy()


class CorrelatedNormalTarget(StandardNormalTarget):
    """Bivariate normal with unit variances and correlation ``rho``."""

    def __init__(self, rho: float = 0.9) -> None:
        super().__init__(2)
        self.cov = np.array([[1.0, rho], [rho, 1.0]])
        self.precision = np.linalg.inv(self.cov)

    def log_density(self, point) -> float:
        x = np.asarray(point, dtype=float)
        return float(-0.5 * x @ self.precision @ x)

    def value_and_grad(self, point) -> Tuple[float, np.ndarray]:
        x = np.asarray(point, dtype=float)
        return float(-0.5 * x @ self.precision @ x), -self.precision @ x
