"""Variational Bayes sparse nonnegative unmixing of hyperspectral pixels."""
from .engine import EngineOptions, run, sweep, unmix_image
from .errors import (ConvergenceError, DomainError, InvariantViolation, NumericalFailure,
                     ParseError, RefusalError, ShapeError, VBUnmixError)
from .model import EndmemberMatrix, Hyperparameters, PosteriorState, init_state

__all__ = [
    "EngineOptions", "run", "sweep", "unmix_image",
    "ConvergenceError", "DomainError", "InvariantViolation", "NumericalFailure",
    "ParseError", "RefusalError", "ShapeError", "VBUnmixError",
    "EndmemberMatrix", "Hyperparameters", "PosteriorState", "init_state",
]
__version__ = "0.1.0"
