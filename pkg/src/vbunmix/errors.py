"""Exception hierarchy shared by the whole package."""


class VBUnmixError(Exception):
    """Base class for every error raised by :mod:`vbunmix`."""


class DomainError(VBUnmixError, ValueError):
    """An argument lies outside the domain of the operation."""


class ShapeError(VBUnmixError, ValueError):
    """Array dimensions do not agree."""


class ParseError(VBUnmixError, ValueError):
    """A text input (ENVI header, CSV matrix, band list) could not be parsed."""


class InvariantViolation(VBUnmixError, AssertionError):
    """A posterior state no longer satisfies its structural invariants."""


class NumericalFailure(VBUnmixError, ArithmeticError):
    """A non-finite value appeared during inference.

    Attributes
    ----------
    sweep : int
        1-based index of the sweep in which the failure was detected.
    parameter : str
        Name of the first state field holding a non-finite value.
    """

    def __init__(self, sweep, parameter, message=None):
        self.sweep = sweep
        self.parameter = parameter
        super().__init__(message or f"non-finite {parameter} in sweep {sweep}")


class RefusalError(VBUnmixError):
    """The request exceeds what a validation-only routine will accept."""


class ConvergenceError(VBUnmixError):
    """An iterative solver stopped before satisfying its optimality test."""

    def __init__(self, message, kkt_residual):
        self.kkt_residual = kkt_residual
        super().__init__(f"{message} (KKT residual {kkt_residual:.3e})")
