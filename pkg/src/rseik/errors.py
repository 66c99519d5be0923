"""Exception hierarchy shared across the package."""


class RseikError(Exception):
    """Base class for all package-specific errors."""


class DomainError(RseikError, ValueError):
    """Invalid input: non-unit orientation, negative cost, bad seed, ..."""


class SingularMetricError(RseikError):
    """Operation requires epsilon > 0 but the exact (epsilon = 0) model was given."""


class StencilError(RseikError):
    """Stencil construction failed (offset cap exceeded, non-acute facet, ...)."""


class SellingError(RseikError):
    """Superbase reduction did not converge within the iteration cap."""


class InstabilityError(RseikError):
    """Explicit time stepping diverged; carries a suggested smaller step."""

    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class ConvergenceError(RseikError):
    """Iterative solve hit the outer-iteration cap; carries the last residual."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class FormatError(RseikError, ValueError):
    """Malformed container file; carries the byte offset of the defect."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset
