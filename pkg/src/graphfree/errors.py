"""Exception types raised across the package."""


class GraphFreeError(Exception):
    """Base class for all package errors."""


class DimensionError(GraphFreeError, ValueError):
    """Operand shapes do not conform."""


class ArgumentError(GraphFreeError, ValueError):
    """An argument is outside its valid domain."""


class StateError(GraphFreeError, RuntimeError):
    """An object was used in an invalid state (e.g. a consumed tape)."""


class ParseError(GraphFreeError, ValueError):
    """Malformed input file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DataError(GraphFreeError, ValueError):
    """Input data cannot be repaired or used (e.g. a fully missing series)."""


class TrainingError(GraphFreeError, RuntimeError):
    """Training diverged (non-finite loss)."""
