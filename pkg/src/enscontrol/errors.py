"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class EnsembleControlError(Exception):
    exit_code = 1


class ConfigError(EnsembleControlError, ValueError):
    """Invalid argument or configuration field."""

    exit_code = 3

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class DimensionError(ConfigError):
    pass


class OverdeterminedShapeError(EnsembleControlError, ValueError):
    """Raised when n*P_total > m*N, i.e. the discrete problem is a least
    squares problem rather than a minimum-norm one."""

    exit_code = 4

    def __init__(self, rows: int, cols: int):
        self.rows = rows
        self.cols = cols
        super().__init__(
            f"operator would have shape ({rows}, {cols}); need n*P_total <= m*N. "
            "Increase time.N or reduce parameters.counts"
        )


class IntegrationError(EnsembleControlError, RuntimeError):
    """Step size underflow during adaptive integration."""

    exit_code = 5

    def __init__(self, message: str, beta=None, t: float | None = None):
        self.beta = beta
        self.t = t
        super().__init__(message)


class DecompositionError(EnsembleControlError, RuntimeError):
    exit_code = 6


class FileMismatchError(EnsembleControlError, ValueError):
    exit_code = 7
