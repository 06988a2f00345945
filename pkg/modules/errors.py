"""
Exception hierarchy for puprior.

Every error raised on purpose by the library derives from PupriorError so the
CLI can map it onto an exit code. The input-side errors also derive from
ValueError and the numerical ones from RuntimeError, so callers that only
know the builtin exceptions keep working.
"""

from typing import Optional

import numpy as np


class PupriorError(Exception):
    """Base class for all puprior errors."""


class InvalidParameterError(PupriorError, ValueError):
    """A parameter is outside its valid range."""


class InsufficientSamplesError(InvalidParameterError):
    """Not enough samples to honour a request (folds, splits, fits)."""


class ShapeError(PupriorError, ValueError):
    """Array shapes or lengths disagree."""


class DomainError(PupriorError, ValueError):
    """A scalar lies outside the finite domain of a conjugate function."""


class DataParseError(PupriorError, ValueError):
    """A CSV file could not be parsed into a numeric matrix."""

    def __init__(self, message: str, row: Optional[int] = None):
        super().__init__(message)
        self.row = row


class DegenerateClassifierError(PupriorError, RuntimeError):
    """A probabilistic classifier collapsed to the clipping floor."""


class WindowError(PupriorError, RuntimeError):
    """The right-endpoint fit window holds too few distinct ROC points."""


class SolverConvergenceError(PupriorError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(
        self,
        message: str,
        last_iterate: Optional[np.ndarray] = None,
        residual: float = float("nan"),
        iterations: int = 0
    ):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations


# CLI exit codes
EXIT_INPUT_ERROR = 2
EXIT_NOT_CONVERGED = 3
EXIT_VERIFY_MISMATCH = 1


def exit_code_for(error: BaseException) -> int:
    """
    Map an exception onto the CLI exit code contract.

    Args:
        error: Exception raised while running a command

    Returns:
        int: 3 for solver non-convergence, 2 for every other input or
            configuration problem
    """
    if isinstance(error, SolverConvergenceError):
        return EXIT_NOT_CONVERGED
    return EXIT_INPUT_ERROR
