"""Finite-blocklength rate-distortion tools for the Gauss-Markov (AR(1)) source."""

from .errors import ConfigurationError, ConvergenceError, DegenerateInputError, DomainError
from .source_model import Decorrelator, SourceParams
from .eigen import EigenSpectrum, exact_eigenvalues
from .waterfill import (
    WaterfillPoint, critical_points, limiting_solve_from_d, limiting_solve_from_theta,
    nth_order_solve,
)

__all__ = [
    "ConfigurationError", "ConvergenceError", "DegenerateInputError", "DomainError",
    "Decorrelator", "SourceParams", "EigenSpectrum", "exact_eigenvalues", "WaterfillPoint",
    "critical_points", "limiting_solve_from_d", "limiting_solve_from_theta", "nth_order_solve",
]
__version__ = "0.1.0"
