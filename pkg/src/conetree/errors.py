"""Exception hierarchy shared by all modules."""


class ConeTreeError(Exception):
    """Base class for library errors."""


class MalformedInputError(ConeTreeError, ValueError):
    """Input data has the wrong shape, sign or type."""


class DomainError(ConeTreeError, ValueError):
    """A point that must lie in the upper half-plane does not."""


class NumericalDomainError(DomainError):
    """An iterate left the upper half-plane during a computation."""


class PreconditionError(ConeTreeError, ValueError):
    """Arguments are well-formed but violate an operation's precondition."""


class ResourceError(ConeTreeError):
    """A tree would exceed the configured vertex cap."""

    def __init__(self, message, projected):
        super().__init__(message)
        self.projected = projected


class ConvergenceError(ConeTreeError):
    """Fixed-point iteration ran out of iterations.

    ``last`` holds the final iterate and ``residual`` the last step size
    measured in the gamma semi-metric.
    """

    def __init__(self, message, last=None, residual=None, z=None):
        super().__init__(message)
        self.last = last
        self.residual = residual
        self.z = z


class MomentBatchError(ConeTreeError):
    """A Monte Carlo batch aborted; ``partial`` holds the finished samples."""

    def __init__(self, message, partial, cause=None):
        super().__init__(message)
        self.partial = partial
        self.cause = cause
