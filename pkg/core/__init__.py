"""barma core — config, errors, model, posterior, dual numbers and RNG."""

from core.config import BarmaConfig, load_config
from core.errors import BarmaError
from core.model import LinkFunction, ModelOrder, ObservationSeries, ParameterVector
from core.posterior import PosteriorEvaluator, PriorSpec

__all__ = [
    "BarmaConfig",
    "load_config",
    "BarmaError",
    "LinkFunction",
    "ModelOrder",
    "ObservationSeries",
    "ParameterVector",
    "PosteriorEvaluator",
    "PriorSpec",
]
