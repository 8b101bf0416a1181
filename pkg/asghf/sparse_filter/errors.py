# sparse_filter/errors.py
from __future__ import annotations
from typing import Any, Optional


# -----------------------------------------------------------
# Configuration / argument errors
# -----------------------------------------------------------

class ConfigError(ValueError):
    """Невалідна конфігурація експерименту або CLI-параметр."""


class InvalidArgumentError(ValueError):
    pass


# -----------------------------------------------------------
# Numerical errors
# -----------------------------------------------------------

class NumericalEvaluationError(ArithmeticError):
    """Integrand returned NaN/inf at some quadrature point."""

    def __init__(self, message: str, point: Optional[Any] = None):
        super().__init__(message)
        self.point = point


class FilterError(ArithmeticError):
    pass


class NonPSDCovarianceError(FilterError):
    def __init__(self, message: str, matrix: Optional[Any] = None):
        super().__init__(message)
        self.matrix = matrix


class SingularInnovationError(FilterError):
    def __init__(self, message: str, matrix: Optional[Any] = None):
        super().__init__(message)
        self.matrix = matrix


class UndefinedBearingError(FilterError):
    pass


# -----------------------------------------------------------
# Experiment-level errors
# -----------------------------------------------------------

class FailureThresholdError(RuntimeError):
    def __init__(self, message: str, failures: Optional[dict] = None):
        super().__init__(message)
        self.failures = failures or {}
