"""Numerical checks of Green-function, weak Harnack and Hoelder estimates for
symmetric alpha-stable Levy processes with a general spectral measure."""

__version__ = "0.1.0"

from .errors import (BudgetExceeded, DegenerateMeasureError, DimensionNotImplemented,
                     GridResolutionError, Inconclusive, ModelError, NoDensityError,
                     PreconditionError, QuadratureError, SingularityError, StableHarnackError)
from .model import Ball, SpectralMeasure, StableModel, cauchy_model, char_exponent, isotropic_model

__all__ = ["Ball", "SpectralMeasure", "StableModel", "cauchy_model", "char_exponent",
           "isotropic_model", "BudgetExceeded", "DegenerateMeasureError",
           "DimensionNotImplemented", "GridResolutionError", "Inconclusive", "ModelError",
           "NoDensityError", "PreconditionError", "QuadratureError", "SingularityError",
           "StableHarnackError"]
