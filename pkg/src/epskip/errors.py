"""Exception types shared across the package."""

from __future__ import annotations


class EpskipError(Exception):
    """Base class for package-specific failures."""


class ScheduleError(EpskipError, ValueError):
    """Invalid sigma schedule: bad bounds, ordering, or composition."""


class UndefinedLogSnrError(ScheduleError):
    """Log-SNR requested for a transition onto sigma = 0."""


class HistoryError(EpskipError, ValueError):
    """Not enough stored residuals for the requested predictor."""


class SkipParseError(EpskipError, ValueError):
    """Malformed explicit skip-index string."""


class ConfigError(EpskipError, ValueError):
    """Invalid harness configuration."""


class NumericDivergenceError(EpskipError, RuntimeError):
    """Trajectory produced a non-finite state."""

    def __init__(self, step_index: int, message: str | None = None):
        self.step_index = step_index
        super().__init__(message or f"non-finite state at step {step_index}")
