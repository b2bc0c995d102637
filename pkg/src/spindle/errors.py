"""Exception types shared across the package."""

from __future__ import annotations


class SpindleError(Exception):
    """Base class for all errors raised by this package."""


class NotationError(SpindleError):
    """Raised for malformed index-notation expressions."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class TensorError(SpindleError):
    """Raised for invalid tensor data or format descriptions."""


class DimensionMismatchError(TensorError):
    """Raised when one index variable is used with inconsistent extents."""


class TensorFileError(SpindleError):
    """Base class for tensor file parse errors; carries a 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class HeaderError(TensorFileError):
    pass


class EntryBoundsError(TensorFileError):
    pass


class EntryValueError(TensorFileError):
    pass


class GraphError(SpindleError):
    """Raised for invalid iteration graphs, including discordant traversals."""


class UnsupportedMergeError(GraphError):
    """Raised when too many sparse operands meet at one index variable."""


class SchedulingError(SpindleError):
    """Raised when a scheduling transformation's precondition fails."""


class RaceError(SchedulingError):
    """Raised when NoRaces parallelization would race on the output."""


class LoweringError(SpindleError):
    """Raised when a scheduled statement cannot be lowered to loops."""


class ExecutionError(SpindleError):
    """Raised by the interpreter for runtime faults."""


class OutOfBoundsError(ExecutionError):
    """An array access left its bounds; always a lowering bug, never masked."""


class ContractViolation(ExecutionError):
    """A MaxExact bound did not match the actual runtime extent."""
