"""Exception hierarchy shared by every module of the package."""


class ConvexMLEError(Exception):
    """Base class for all package errors."""


class DomainError(ConvexMLEError, ValueError):
    """An argument lies outside the domain of a function or model."""


class NoRootError(ConvexMLEError):
    """A monotone function showed no sign change over the searched bracket.

    ``f_lo`` and ``f_hi`` are the function values at the outermost bracket
    endpoints that were tried, so callers can tell which way the function
    was one-signed.
    """

    def __init__(self, message, lo=None, hi=None, f_lo=None, f_hi=None):
        super().__init__(message)
        self.lo = lo
        self.hi = hi
        self.f_lo = f_lo
        self.f_hi = f_hi


class AccuracyError(ConvexMLEError):
    """Quadrature failed to reach its tolerance; carries the best estimate."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class InvalidModelError(ConvexMLEError, ValueError):
    """A model violates its contract (non-convex family, bad information)."""


class DegenerateScoreError(ConvexMLEError):
    """Every per-datum score vanished at the evaluation point."""


class StabilityError(ConvexMLEError):
    """The exact hypoexponential evaluation lost too much precision.

    The Monte Carlo oracle is the recommended fallback.
    """

    def __init__(self, message, raw_value=None):
        super().__init__(message)
        self.raw_value = raw_value


class MonotonicityError(ConvexMLEError):
    """A function expected to be monotone was not, on the named bracket."""

    def __init__(self, message, lo=None, hi=None):
        super().__init__(message)
        self.lo = lo
        self.hi = hi
