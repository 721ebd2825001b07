"""Exception hierarchy shared by every greenwalk module."""

from __future__ import annotations


class GreenwalkError(Exception):
    """Base class for all errors raised by the package."""


class ConfigurationError(GreenwalkError):
    """Invalid run configuration; ``key`` names the offending config path."""

    def __init__(self, message: str, key: str | None = None) -> None:
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class DomainError(GreenwalkError):
    """A point or argument lies outside the admissible region."""


class PreconditionError(GreenwalkError):
    """An operation was called with inputs violating its contract."""


class ModelEvaluationError(GreenwalkError):
    """Transport-model coefficients evaluated to a non-finite value."""

    def __init__(self, message: str, position=None, time: float | None = None) -> None:
        self.position = position
        self.time = time
        super().__init__(f"{message} (position={position}, time={time})")


class DegenerateStepError(GreenwalkError):
    """A reflected walker failed to re-enter the domain; use a smaller dt."""


class SwarmExtinctionError(GreenwalkError):
    """Every walker was absorbed in a single step, so respawning cannot continue."""

    def __init__(self, message: str, audit=None) -> None:
        self.audit = audit
        super().__init__(message)


class SmoothingDegenerateError(GreenwalkError):
    """Window search found no cell to score."""


class UndefinedMetricError(GreenwalkError):
    """An error metric has an empty or all-zero support."""


class ConvergenceError(GreenwalkError):
    """A truncated series did not reach its tail tolerance."""


class ResolutionError(GreenwalkError):
    """Quadrature at two resolutions disagrees beyond tolerance."""
