"""Exception types raised across the package."""


class RsensError(Exception):
    """Base class for all package errors."""


class DomainError(RsensError, ValueError):
    """A distribution parameter lies outside its admissible domain."""


class VariantMismatchError(RsensError, TypeError):
    """Two predictive distributions belong to different families."""


class UndefinedDivergenceError(RsensError, ValueError):
    """The requested divergence does not exist for these arguments."""


class QuadratureError(RsensError, RuntimeError):
    """Numerical integration failed to reach the requested tolerance."""


class FitError(RsensError, RuntimeError):
    """Model fitting failed (factorisation, Newton iterations, ...)."""


class DataError(RsensError, ValueError):
    """Input data is malformed or violates a model's requirements."""
