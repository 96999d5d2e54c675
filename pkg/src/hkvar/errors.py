"""Shared exception types."""

from __future__ import annotations


class DomainError(ValueError):
    """A point or rectangle lies outside the domain it is being used with."""


class EvaluationError(RuntimeError):
    """A function source produced a non-finite value.

    Carries the offending evaluation point in ``point``.
    """

    def __init__(self, message: str, point: tuple[float, ...] | None = None):
        super().__init__(message)
        self.point = point


class GridFileError(ValueError):
    """A grid file could not be parsed.  ``line`` is the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PreconditionError(ValueError):
    """A theorem check was invoked on an input violating its hypothesis.

    ``witness`` holds whatever evidence the check gathered (for instance a
    monotonicity report with the offending cell).
    """

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness
