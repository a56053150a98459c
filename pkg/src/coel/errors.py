"""Exception types raised across the package."""


class CoelError(Exception):
    """Base class for all package errors."""


class UnsupportedDimensionError(CoelError, ValueError):
    pass


class QuadratureError(CoelError, RuntimeError):
    """Adaptive quadrature could not reach the requested tolerance."""


class SingularEvaluationError(CoelError, ValueError):
    pass


class TailDivergenceError(CoelError, ValueError):
    """An improper integral does not converge for the given decay."""


class NormalizationError(CoelError, RuntimeError):
    pass


class SignChangeError(CoelError, ValueError):
    """log|f| is undefined because f changes sign inside a fit window."""


class GridSpanError(CoelError, ValueError):
    """A dyadic sup is attained at the edge of the scanned range."""


class DegenerateBasisError(CoelError, ValueError):
    pass


class NotConvergedError(CoelError, RuntimeError):
    pass


class CFLViolationError(CoelError, ValueError):
    pass


class DomainTooSmallError(CoelError, ValueError):
    pass


class GridInfeasibleError(CoelError, ValueError):
    pass


class ConfigError(CoelError, ValueError):
    """Malformed configuration or command line; maps to exit code 2."""
