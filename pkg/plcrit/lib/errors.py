"""
errors.py - Exception hierarchy shared by every plcrit module.

Each error names the kind of failure rather than the module raising it, so callers
can catch, e.g., every precondition failure regardless of where it was detected.
"""


class PlcritError(Exception):
    """Base class for all plcrit errors."""


class ArgumentError(PlcritError, ValueError):
    """An argument is malformed or inconsistent with the other arguments."""


class DomainError(PlcritError, ValueError):
    """An interval, level or point lies outside the problem domain."""


class EvaluationError(PlcritError, ArithmeticError):
    """A potential or profile produced a non-finite value where one is required."""


class PreconditionError(PlcritError):
    """A mathematical hypothesis of the requested operation does not hold."""


class StateError(PlcritError):
    """The operation is not available for the current verdict or run state."""


class ConvergenceError(PlcritError):
    """An iteration could not produce any usable output."""


class ConfigError(PlcritError, ValueError):
    """A configuration file is malformed. Carries the offending line when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
