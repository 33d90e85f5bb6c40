"""Exception hierarchy shared by every module.

Each class maps to one CLI exit code (see :mod:`mlzsr.cli`).
"""


class MLZSRError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(MLZSRError, ValueError):
    """Invalid hyper-parameter, dimension or configuration value."""

    exit_code = 2


class ShapeError(ConfigError):
    """Array dimensions do not agree."""


class DomainError(MLZSRError, ValueError):
    """An argument lies outside the domain of an operation."""

    exit_code = 3


class SplitInfeasibleError(DomainError):
    """A requested data split cannot be constructed."""


class ParseError(MLZSRError, ValueError):
    """A file does not follow its documented format."""

    exit_code = 3

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericError(MLZSRError, FloatingPointError):
    """A computation produced NaN or Inf."""

    exit_code = 4


class StateError(MLZSRError, RuntimeError):
    """An object was used in an inconsistent state (stale cache, unfitted model)."""

    exit_code = 4
