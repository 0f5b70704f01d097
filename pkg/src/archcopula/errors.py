"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class CopulaError(Exception):
    """Base class for every error raised by :mod:`archcopula`."""


class ArgumentError(CopulaError, ValueError):
    """Malformed argument (empty input, mismatched lengths, unsorted data)."""


class DomainError(CopulaError, ValueError):
    """Argument outside the mathematical domain of an operation.

    ``residual`` optionally carries the offending signed-log value
    ``(sign, logabs)`` when the failure comes from a signed log-sum.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CapacityError(CopulaError, IndexError):
    """Index beyond a precomputed table."""


class RangeError(CopulaError, ValueError):
    """Target value outside the attainable range of a dependence measure."""

    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound


class BracketError(CopulaError, ValueError):
    """Root finder called on an interval without a sign change."""


class ConvergenceError(CopulaError, ArithmeticError):
    """Iterative solver exhausted its budget."""


class EvaluationError(CopulaError, ArithmeticError):
    """Objective or special function produced a non-finite or unusable value."""


class MethodFailure(EvaluationError):
    """An evaluation strategy detected that it cannot deliver an accurate result."""


class RowError(CopulaError, ValueError):
    """A data row is degenerate (component exactly 0 or 1)."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row
