"""Exception types raised across the package."""


class BRWError(Exception):
    """Base class for all package errors."""


class DomainError(BRWError, ValueError):
    """Parameter lies outside the domain where the Laplace transform converges."""


class ZeroTransform(BRWError, ArithmeticError):
    """|m(lambda)| vanishes (numerically), so the martingale is undefined."""


class InvalidModel(BRWError, ValueError):
    pass


class PopulationCapExceeded(BRWError, RuntimeError):
    def __init__(self, population, cap):
        super().__init__(f"population {population} exceeds cap {cap}")
        self.population = population
        self.cap = cap


class NotNormalized(BRWError, ValueError):
    """The tilt |L|^alpha is not a probability weighting: f(alpha) != 1."""


class MonotonicityViolation(BRWError, ArithmeticError):
    pass


class SearchExhausted(BRWError, RuntimeError):
    pass


class DimensionMismatch(BRWError, ValueError):
    pass


class NoUnitEigenvalue(BRWError, ArithmeticError):
    pass


class InsufficientData(BRWError, ValueError):
    pass


class ConfigError(BRWError, ValueError):
    pass
