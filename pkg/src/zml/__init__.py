"""Numerics for the fourth moment of zeta(1/2 + it) and its modified Mellin transform."""

from .errors import (ConvergenceError, DataError, DomainError, IllConditionedError, InfeasibleError,
                     PoleError, PrecisionError, ZmlError)

__version__ = "0.1.0"

__all__ = [
    "ZmlError", "PoleError", "DomainError", "ConvergenceError", "PrecisionError",
    "IllConditionedError", "InfeasibleError", "DataError", "__version__",
]
