from __future__ import annotations


class DecayError(Exception):
    """Base for everything raised on purpose by this package"""


class ConfigError(DecayError, ValueError):
    pass


class UnsupportedOperationError(DecayError, ValueError):
    pass


class NumericalError(DecayError, RuntimeError):
    pass


class QuadratureError(NumericalError):
    def __init__(self, message: str, *, location: float | complex | None = None, err_estimate: float | None = None):
        super().__init__(message, location, err_estimate)
        self.location = location
        self.err_estimate = err_estimate


class ConvergenceError(NumericalError):
    def __init__(self, message: str, *, iterations: int, residual: float):
        super().__init__(message, iterations, residual)
        self.iterations = iterations
        self.residual = residual


class OutOfRegimeError(NumericalError):
    pass


class RefinementRequiredError(NumericalError):
    def __init__(self, message: str, *, err_estimate: float, suggested_step: float):
        super().__init__(message, err_estimate, suggested_step)
        self.err_estimate = err_estimate
        self.suggested_step = suggested_step


class StableStateError(NumericalError):
    pass


class UndefinedZenoTimeError(NumericalError):
    pass


class RegimeNotReachedError(NumericalError):
    pass
