"""Exception types raised across the package."""


class McsideError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(McsideError, ValueError):
    pass


class NonFiniteError(McsideError, ValueError):
    pass


class NumericalFailureError(McsideError, ArithmeticError):
    pass


class NonzeroDiagonalError(McsideError, ValueError):
    pass


class InfeasibleRankError(McsideError, ValueError):
    """The requested rank cannot be realised on the constrained set.

    ``q`` carries the rank of ``C - I`` when the error comes from
    manifold construction, otherwise ``None``.
    """

    def __init__(self, message, q=None):
        super().__init__(message)
        self.q = q


class OffManifoldError(McsideError, ValueError):
    pass


class RankDeficientStepError(McsideError, ArithmeticError):
    """Retraction target has fewer than ``r`` significant singular values."""


class BacktrackExhaustedError(McsideError, RuntimeError):
    pass


class ZeroDenominatorError(McsideError, ZeroDivisionError):
    pass


class SpecValidationError(McsideError, ValueError):
    pass


class NearDegenerateTruncationWarning(UserWarning):
    """Gap between the r-th and (r+1)-th singular value is tiny, truncation is not unique."""
