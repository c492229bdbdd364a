"""Exception types raised across the package."""


class AbstainError(Exception):
    """Base class for all package errors."""


class InputDomainError(AbstainError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class UndefinedRiskError(AbstainError, ArithmeticError):
    """Selective risk requested with zero accepted steps (0/0)."""


class TrainingError(AbstainError, RuntimeError):
    """Gradient training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ParseError(AbstainError, ValueError):
    """Malformed input file."""

    def __init__(self, message, series_id=None, line=None):
        super().__init__(message)
        self.series_id = series_id
        self.line = line
