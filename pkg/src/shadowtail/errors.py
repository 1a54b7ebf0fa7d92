"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ConvergenceError(RuntimeError):
    """An iterative routine (quadrature, optimizer) failed to converge."""


class DegenerateSampleError(ValueError):
    """The sample carries no information about the parameters (e.g. constant)."""


class InsufficientDataError(ValueError):
    """Too few observations (or exceedances) for the requested estimate."""


class BoundViolationError(ValueError):
    """Observations fall outside the declared support [L, H)."""

    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = tuple(rows)
