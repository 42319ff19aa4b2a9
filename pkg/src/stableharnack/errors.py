"""Exception types shared across the package."""


class StableHarnackError(Exception):
    """Base class for all package errors."""


class ModelError(StableHarnackError, ValueError):
    """Invalid process specification."""


class DegenerateMeasureError(ModelError):
    """Spectral measure supported in a proper subspace."""

    def __init__(self, message, min_value=None, direction=None):
        super().__init__(message)
        self.min_value = min_value
        self.direction = direction


class DimensionNotImplemented(ModelError, NotImplementedError):
    pass


class SingularityError(StableHarnackError, ValueError):
    """Evaluation requested at a singular point (x = 0 or x = z)."""


class NoDensityError(ModelError):
    """The spectral measure has no Lebesgue density (atomic variant)."""


class GridResolutionError(StableHarnackError, ValueError):
    """Fourier grid too coarse or too small for the requested model."""


class PreconditionError(StableHarnackError, ValueError):
    pass


class QuadratureError(StableHarnackError, RuntimeError):
    pass


class BudgetExceeded(StableHarnackError, RuntimeError):
    """Monte Carlo step or path budget exhausted."""


class Inconclusive(StableHarnackError):
    """A verification could not reach a decision at the current budget."""
