"""Structured errors with CLI exit-code mapping."""


class CarnotDimError(Exception):
    """Base class for all artifact errors."""
    exit_code = 2


class ValidationError(CarnotDimError):
    """Bad inputs: dimension mismatch, out-of-range parameters, malformed specs."""
    exit_code = 2


class UnsupportedError(ValidationError):
    """Operation not defined for the given group / chain (e.g. quaternionic inversion)."""
    exit_code = 2


class BudgetError(CarnotDimError):
    """An enumeration or sampling budget would be exceeded."""
    exit_code = 3

    def __init__(self, message, estimate=None, budget=None):
        super().__init__(message)
        self.estimate = estimate
        self.budget = budget


class PoleError(CarnotDimError):
    """A point is at (or numerically too close to) a pole of a conformal map."""
    exit_code = 2

    def __init__(self, message, distance=None):
        super().__init__(message)
        self.distance = distance


class NonConvergenceError(CarnotDimError):
    """An iterative scheme (power iteration, bisection) failed to converge."""
    exit_code = 4
