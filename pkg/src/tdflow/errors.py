"""Exception hierarchy shared by all tdflow modules."""


class TDFlowError(Exception):
    """Base class for every error raised by tdflow."""


class PreconditionError(TDFlowError, ValueError):
    """An operation was called outside its documented domain."""


class InvalidStateError(TDFlowError, ValueError):
    """A point or measure violates the invariants of its space."""


class HypothesisViolation(TDFlowError):
    """A structural hypothesis required by a bound does not hold."""


class NumericError(TDFlowError, ArithmeticError):
    """Quadrature or integration produced non-finite values."""


class UnsupportedDiagnostic(TDFlowError):
    """The functional lacks an ingredient a diagnostic needs."""


class IntegrityError(TDFlowError):
    """A reference solver lost mass or positivity beyond tolerance."""


class ProxConvergenceError(TDFlowError):
    """The inner proximal solver hit its iteration cap.

    The last iterate and the stationarity measure reached are kept so a
    caller can inspect how far the solver got.
    """

    def __init__(self, message, last_iterate=None, residual=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations


class SchemeError(TDFlowError):
    """A step of the minimizing-movement scheme failed.

    ``partial`` holds the trajectory computed up to the failing step.
    """

    def __init__(self, message, partial=None, step=None):
        super().__init__(message)
        self.partial = partial
        self.step = step


class StiffInstanceError(TDFlowError):
    """The adaptive reference integrator could not keep a usable step size."""
