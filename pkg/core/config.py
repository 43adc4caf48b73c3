"""
Barma Configuration — YAML + Dataclass Loader

Loads config.yaml and produces a BarmaConfig dataclass.
Pattern: YAML → nested dataclasses → dot-access, with ${ENV} interpolation.
Command-line flags are applied on top by the CLI (flags override file).

# ---- Changelog ----
# [2026-10-16] Reworked for barma.
#   What: Sections for model, priors, sampler, selection, forecast,
#         analysis, study and runtime.
#   Why:  Every run is fully described by one config so it can be recorded
#         in the output manifest and replayed.
#   How:  Same loader shape as before; each section gained validate(),
#         and _apply_dict recurses into any dataclass-valued field.
# -------------------
"""

from __future__ import annotations

import dataclasses
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from core.errors import ConfigError

logger = logging.getLogger("barma.config")

_DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config.yaml"

THREADS_ENV = "BARMA_THREADS"
DEFAULT_THRESHOLDS = [1.01, 1.02, 1.03, 1.04, 1.05]
DEFAULT_GRID = [[0, 1], [1, 0], [1, 1], [1, 2], [2, 1]]
MIN_WARMUP = 20
STUDY_PRESETS = ("point", "unitroot", "sensitivity")
FULL_REPLICATES = 50


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# Config dataclasses
# ---------------------------------------------------------------------------

@dataclass
class ModelConfig:
    """Model order and link."""
    p: int = 1
    q: int = 1
    link: str = "logit"

    def validate(self) -> None:
        _require(int(self.p) == self.p and self.p >= 0, f"model.p must be a nonnegative integer, got {self.p!r}")
        _require(int(self.q) == self.q and self.q >= 0, f"model.q must be a nonnegative integer, got {self.q!r}")
        _require(self.link in ("logit", "cloglog"), f"model.link must be logit or cloglog, got {self.link!r}")


@dataclass
class PriorConfig:
    """Gamma(nu_shape, nu_rate) on ν; normal (or uniform α) elsewhere."""
    nu_shape: float = 5.0
    nu_rate: float = 0.1
    alpha_prior: str = "normal"
    sigma2_alpha: float = 4.0e8
    sigma2_beta: float = 4.0e8
    sigma2_phi: float = 4.0e8
    sigma2_theta: float = 4.0e8

    def validate(self) -> None:
        for name in ("nu_shape", "nu_rate", "sigma2_alpha", "sigma2_beta", "sigma2_phi", "sigma2_theta"):
            value = getattr(self, name)
            _require(isinstance(value, (int, float)) and value > 0, f"priors.{name} must be positive, got {value!r}")
        _require(self.alpha_prior in ("normal", "uniform"),
                 f"priors.alpha_prior must be normal or uniform, got {self.alpha_prior!r}")


@dataclass
class SamplerConfig:
    """Chain layout and NUTS settings."""
    n_chains: int = 2
    n_iterations: int = 2000
    warmup_fraction: float = 0.5
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 20240101

    @property
    def n_warmup(self) -> int:
        return int(round(self.n_iterations * self.warmup_fraction))

    @property
    def n_draws(self) -> int:
        return self.n_iterations - self.n_warmup

    def validate(self) -> None:
        _require(self.n_chains >= 1, f"sampler.n_chains must be >= 1, got {self.n_chains}")
        _require(0.0 < self.warmup_fraction < 1.0,
                 f"sampler.warmup_fraction must lie in (0,1), got {self.warmup_fraction}")
        _require(self.n_draws >= 1, "sampler.n_iterations leaves no draws after warmup")
        _require(self.n_warmup >= MIN_WARMUP,
                 f"sampler warmup needs at least {MIN_WARMUP} iterations, got {self.n_warmup}")
        _require(0.0 < self.target_accept < 1.0,
                 f"sampler.target_accept must lie in (0,1), got {self.target_accept}")
        _require(self.max_tree_depth >= 0, f"sampler.max_tree_depth must be >= 0, got {self.max_tree_depth}")
        _require(int(self.seed) == self.seed, f"sampler.seed must be an integer, got {self.seed!r}")


@dataclass
class SelectionConfig:
    """Stepping-stone ladder and order grid."""
    rungs: int = 30
    exponent: float = 5.0
    draws_per_rung: int = 400
    warmup_per_rung: int = 100
    grid: List[List[int]] = field(default_factory=lambda: [list(g) for g in DEFAULT_GRID])
    wide_prior_warning_variance: float = 1.0e6

    def validate(self) -> None:
        _require(self.rungs >= 1, f"selection.rungs must be >= 1, got {self.rungs}")
        _require(self.exponent > 0, f"selection.exponent must be positive, got {self.exponent}")
        _require(self.draws_per_rung >= 2, f"selection.draws_per_rung must be >= 2, got {self.draws_per_rung}")
        _require(self.warmup_per_rung >= 0, f"selection.warmup_per_rung must be >= 0, got {self.warmup_per_rung}")
        _require(len(self.grid) > 0, "selection.grid must not be empty")
        for pair in self.grid:
            _require(len(pair) == 2 and all(int(v) == v and v >= 0 for v in pair),
                     f"selection.grid entries must be (p, q) pairs, got {pair!r}")


@dataclass
class ForecastConfig:
    horizon: int = 6
    holdout: int = 6
    level: float = 0.95
    max_draws: int = 0          # 0 = use every posterior draw

    def validate(self) -> None:
        _require(self.horizon >= 1, f"forecast.horizon must be >= 1, got {self.horizon}")
        _require(self.holdout >= 0, f"forecast.holdout must be >= 0, got {self.holdout}")
        _require(0.0 < self.level < 1.0, f"forecast.level must lie in (0,1), got {self.level}")
        _require(self.max_draws >= 0, f"forecast.max_draws must be >= 0, got {self.max_draws}")


@dataclass
class AnalysisConfig:
    level: float = 0.95
    thresholds: List[float] = field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    decision_threshold: float = 1.05
    density_points: int = 256
    trace_thin: int = 1

    def validate(self) -> None:
        _require(0.0 < self.level < 1.0, f"analysis.level must lie in (0,1), got {self.level}")
        _require(len(self.thresholds) > 0, "analysis.thresholds must not be empty")
        _require(all(t >= 1.0 for t in self.thresholds), "analysis.thresholds must all be >= 1")
        _require(list(self.thresholds) == sorted(self.thresholds), "analysis.thresholds must be sorted")
        _require(self.density_points >= 2, f"analysis.density_points must be >= 2, got {self.density_points}")
        _require(self.trace_thin >= 1, f"analysis.trace_thin must be >= 1, got {self.trace_thin}")


@dataclass
class StudyConfig:
    preset: str = "point"
    replicates: int = 10
    burn_in: int = 50
    min_success: float = 0.8
    full_replicates: bool = False
    cells: List[str] = field(default_factory=list)   # empty = every cell of the preset

    @property
    def effective_replicates(self) -> int:
        return FULL_REPLICATES if self.full_replicates else self.replicates

    def validate(self) -> None:
        _require(self.replicates >= 1, f"study.replicates must be >= 1, got {self.replicates}")
        _require(self.burn_in >= 0, f"study.burn_in must be >= 0, got {self.burn_in}")
        _require(0.0 < self.min_success <= 1.0, f"study.min_success must lie in (0,1], got {self.min_success}")
        _require(self.preset in STUDY_PRESETS, f"study.preset must be one of {', '.join(STUDY_PRESETS)}, got {self.preset!r}")


@dataclass
class RuntimeConfig:
    threads: int = 0            # 0 = BARMA_THREADS, else os.cpu_count()
    log_level: str = "INFO"

    def resolved_threads(self) -> int:
        return resolve_threads(self.threads)

    def validate(self) -> None:
        _require(self.threads >= 0, f"runtime.threads must be >= 0, got {self.threads}")


@dataclass
class BarmaConfig:
    """Top-level barma configuration.

    Loaded from config.yaml with env-var interpolation.
    Every field has a default so the toolkit runs without a file.
    """
    module_id: str = "barma"
    version: str = "0.1.0"

    model: ModelConfig = field(default_factory=ModelConfig)
    priors: PriorConfig = field(default_factory=PriorConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    study: StudyConfig = field(default_factory=StudyConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)

    def validate(self) -> "BarmaConfig":
        for section in (self.model, self.priors, self.sampler, self.selection,
                        self.forecast, self.analysis, self.study, self.runtime):
            section.validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# Loader
# ---------------------------------------------------------------------------

def resolve_threads(requested: int = 0) -> int:
    """Explicit count, else $BARMA_THREADS, else available CPUs."""
    if requested and requested > 0:
        return int(requested)
    env = os.environ.get(THREADS_ENV, "").strip()
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if value >= 1:
            return value
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {value}")
    return os.cpu_count() or 1


def _interpolate_env(value: Any) -> Any:
    """Replace ${ENV_VAR} patterns with environment variable values."""
    if isinstance(value, str) and "${" in value:
        def _replace(match: Any) -> str:
            return os.environ.get(match.group(1), match.group(0))
        return re.sub(r"\$\{(\w+)\}", _replace, value)
    return value


def _coerce(current: Any, value: Any, key: str) -> Any:
    """Cast an interpolated YAML value to the type of the field default."""
    value = _interpolate_env(value)
    if isinstance(current, bool):
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    if isinstance(current, int) and not isinstance(current, bool):
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r} expects an integer, got {value!r}") from None
    if isinstance(current, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r} expects a number, got {value!r}") from None
    return value


def apply_dict(target_dc: Any, source: Dict[str, Any], prefix: str = "") -> None:
    """Apply a plain dict onto a dataclass instance, interpolating env vars."""
    for key, value in source.items():
        if not hasattr(target_dc, key):
            logger.debug("Unmapped config key: %s%s (ignored)", prefix, key)
            continue
        current = getattr(target_dc, key)
        if dataclasses.is_dataclass(current):
            if isinstance(value, dict):
                apply_dict(current, value, prefix=f"{prefix}{key}.")
            else:
                raise ConfigError(f"config section {prefix}{key} must be a mapping")
        else:
            setattr(target_dc, key, _coerce(current, value, prefix + key))


def load_config(path: Optional[str] = None) -> BarmaConfig:
    """Load BarmaConfig from a YAML file.

    Args:
        path: Path to a YAML config.  Defaults to the project root config.yaml.

    Returns:
        Populated BarmaConfig with env-var interpolation applied.

    Raises:
        ConfigError: the file exists but is not valid YAML, or a value has
            the wrong type.
    """
    config_path = Path(path) if path else _DEFAULT_CONFIG_PATH

    cfg = BarmaConfig()

    if not config_path.exists():
        if path:
            raise ConfigError(f"config file not found: {config_path}")
        logger.info("No config file at %s, using defaults", config_path)
        return cfg

    import yaml

    try:
        with open(config_path, encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"failed to parse {config_path}: {exc}") from exc

    if raw and isinstance(raw, dict):
        apply_dict(cfg, raw)
        logger.info("Config loaded from %s", config_path)
    return cfg


def config_from_dict(raw: Dict[str, Any]) -> BarmaConfig:
    """Rebuild a config from a plain dict, e.g. one stored in a manifest."""
    cfg = BarmaConfig()
    apply_dict(cfg, raw)
    return cfg
