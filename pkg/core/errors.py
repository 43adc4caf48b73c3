"""
Barma Errors — one exception hierarchy for the whole toolkit.

Every error carries the process exit code the CLI maps it to:
1 for validation problems (bad input, bad config), 2 for numerical
failures (divergence, non-convergence, adaptation collapse).

# ---- Changelog ----
# [2026-10-16] Initial creation.
#   What: BarmaError root with validation and numerical branches.
#   How:  Validation errors also subclass ValueError and numerical ones
#         ArithmeticError so callers can catch either family generically.
# -------------------
"""

from __future__ import annotations

from typing import Optional, Sequence

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


class BarmaError(Exception):
    """Root of all barma errors."""
    exit_code: int = EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# Validation errors (exit 1)
# ---------------------------------------------------------------------------

class ValidationError(BarmaError, ValueError):
    exit_code = EXIT_VALIDATION


class DomainError(ValidationError):
    """Argument outside its open domain (y, μ not in (0,1); ν ≤ 0; ...)."""


class DimensionError(ValidationError):
    """Parameter, covariate or series sizes disagree with the model order."""


class ConfigError(ValidationError):
    """Invalid configuration value."""


class InsufficientDrawsError(ValidationError):
    """Too few posterior draws to summarize."""


class DataFileError(ValidationError):
    """Input file could not be parsed or holds out-of-domain values.

    ``line`` is the 1-based file line of a parse failure; ``rows`` lists the
    1-based data rows that violate the open-interval constraint.
    """

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        rows: Sequence[int] = (),
    ) -> None:
        super().__init__(message)
        self.line = line
        self.rows = tuple(rows)


# ---------------------------------------------------------------------------
# Numerical errors (exit 2)
# ---------------------------------------------------------------------------

class NumericalError(BarmaError, ArithmeticError):
    exit_code = EXIT_NUMERICAL


class SingularityError(NumericalError):
    """AR polynomial evaluated at one is (numerically) zero."""


class DivergenceError(NumericalError):
    """Non-finite intermediate or runaway recursion."""


class ConvergenceError(NumericalError):
    """Iterative method did not converge within its iteration cap."""


class AdaptationError(NumericalError):
    """Step-size adaptation collapsed."""


class SamplingError(NumericalError):
    """Every chain failed."""


class EstimationError(NumericalError):
    """Marginal-likelihood estimate is not finite."""
