"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature failed to converge within its node budget."""

    def __init__(self, message, last_estimates=None):
        super().__init__(message)
        self.last_estimates = last_estimates


class NumericalFailure(ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class OptimizationWarning(RuntimeWarning):
    """A seed optimization stopped without meeting its convergence criteria."""
