"""Exception types raised across the package."""

import numpy as np


class InvalidInputError(ValueError):
    """Input violates a documented precondition."""


class DomainError(ValueError):
    """Input lies outside the mathematical domain of an operation."""


class SingularMatrixError(np.linalg.LinAlgError):
    """Cholesky factorization failed even after diagonal loading.

    ``pivot`` is the 1-based order of the leading minor that is not positive
    definite; ``index`` is the flat position of the matrix inside a batch.
    """

    def __init__(self, message, pivot=None, index=None):
        super().__init__(message)
        self.pivot = pivot
        self.index = index


class DegenerateBinError(RuntimeError):
    """Every class assigns zero density to some range bin."""

    def __init__(self, message, bins=None):
        super().__init__(message)
        self.bins = bins


class EmAbortedError(RuntimeError):
    """An EM iteration failed; ``state`` holds the last valid iterate."""

    def __init__(self, message, state=None, iteration=None):
        super().__init__(message)
        self.state = state
        self.iteration = iteration


class InsufficientCalibrationError(ValueError):
    pass


class UndefinedDeltaError(ZeroDivisionError):
    pass


class InternalConsistencyError(RuntimeError):
    pass


class MissingDataError(KeyError):
    """Requested rows are absent from a result table."""

    def __init__(self, missing):
        super().__init__(f"missing rows: {', '.join(map(str, missing))}")
        self.missing = list(missing)
