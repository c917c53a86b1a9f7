"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class InsufficientSampleError(DomainError):
    """Fewer than two arrivals: the sample variance is undefined."""


class DegenerateSchemeError(ValueError):
    """Two symbols cannot be told apart by the sample-variance statistic."""


class ModeMismatchError(ValueError):
    """Noiseless detection was requested for a degraded observation."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature hit its depth cap before meeting the tolerance."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ConfigError(ValueError):
    """Invalid or incompatible experiment configuration."""
