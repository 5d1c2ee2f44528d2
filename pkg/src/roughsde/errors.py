"""Exception hierarchy shared by all modules."""


class RoughSDEError(Exception):
    """Base class for every error raised by :mod:`roughsde`."""


class InvalidArgumentError(RoughSDEError, ValueError):
    """A precondition on an argument was violated."""


class DomainError(RoughSDEError, ValueError):
    """A coefficient was evaluated outside its declared domain."""


class RangeExhaustedError(RoughSDEError, ValueError):
    """A value lies outside the range an inverse transform can reach."""


class NonIntegrableCoefficientError(RoughSDEError, ArithmeticError):
    """``1/sigma`` failed the local integrability audit."""


class InfeasibleIntegrandError(RoughSDEError, ArithmeticError):
    """A fractional norm needed by the pathwise integral diverged.

    ``norm`` names the failing norm and ``theta`` the order it was
    evaluated at.
    """

    def __init__(self, message, norm=None, theta=None):
        super().__init__(message)
        self.norm = norm
        self.theta = theta


class EmbeddingError(RoughSDEError, RuntimeError):
    """Circulant embedding produced a negative eigenvalue."""
