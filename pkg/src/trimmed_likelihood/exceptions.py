"""
Error Hierarchy
===============

Structured errors raised by the estimation library. Orchestration code (CLI,
experiment runner) catches these at its boundary and turns them into exit
codes or report rows.
"""

from typing import Optional, Sequence


class TrimmedLikelihoodError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(TrimmedLikelihoodError, ValueError):
    """Invalid configuration values."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__(f"Configuration errors: {', '.join(self.problems)}")


class DimensionMismatchError(TrimmedLikelihoodError, ValueError):
    """Vectors or matrices whose dimensions do not agree."""


class NotPositiveDefiniteError(TrimmedLikelihoodError, ValueError):
    """A scatter or shape matrix that is not symmetric positive-definite."""


class DegenerateRegionError(TrimmedLikelihoodError, ValueError):
    """An ellipsoid with non-positive radius."""


class InsufficientDataError(TrimmedLikelihoodError, ValueError):
    """Too few observations (or too few inside the trimming region)."""


class DegenerateDataError(TrimmedLikelihoodError):
    """Data not in general position (e.g. all points on a hyperplane)."""


class NonExistenceError(TrimmedLikelihoodError):
    """The maximum likelihood estimator does not exist for this configuration.

    Raised when the iterates of the maximizer run to the boundary of the
    parameter space while the objective is still increasing.
    """

    def __init__(self, message: str, monitor: str, last_theta=None, iterations: int = 0):
        self.monitor = monitor
        self.last_theta = last_theta
        self.iterations = iterations
        super().__init__(message)


class EStepStarvationError(TrimmedLikelihoodError):
    """Rejection sampling of the censored region accepted too few draws."""

    def __init__(self, accepted: int, draws: int, widening: float):
        self.accepted = accepted
        self.draws = draws
        self.widening = widening
        super().__init__(
            f"E-step accepted only {accepted} of {draws} draws outside the region "
            f"(proposal widened x{widening:g}); increase em_mc_draws or use the "
            f"complement E-step"
        )


class InfeasibleStartError(TrimmedLikelihoodError, ValueError):
    """Initial parameter violates the restriction P_theta(A) >= alpha."""


class SingularInformationError(TrimmedLikelihoodError):
    """An information matrix that cannot be inverted."""


class DataFormatError(TrimmedLikelihoodError, ValueError):
    """Malformed input data file."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        suffix = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")
