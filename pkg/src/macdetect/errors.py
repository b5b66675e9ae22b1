"""Exception hierarchy. Every error raised on purpose derives from MacDetectError."""


class MacDetectError(Exception):
    """Base class for all package errors."""


class SingularPsdError(MacDetectError, ValueError):
    """A spectral model has a (near) pole or an ill-defined denominator."""


class DegenerateSpectrumError(MacDetectError, ValueError):
    """A spectral shape integrates to zero or is otherwise unusable."""


class InvalidFractionError(MacDetectError, ValueError):
    """A bandwidth fraction is outside (0, 1]."""


class AccuracyError(MacDetectError, ArithmeticError):
    """A quadrature did not converge under grid refinement."""


class ModelError(MacDetectError, ValueError):
    """Model parameters give a singular system."""


class ConditioningError(MacDetectError, ArithmeticError):
    """A covariance failed to factor or lost definiteness."""


class DimensionError(MacDetectError, ValueError):
    """Array shapes are inconsistent."""


class DomainError(MacDetectError, ValueError):
    """An argument is outside the domain of a function."""


class OutOfRangeError(MacDetectError, ValueError):
    """A threshold lies outside the open interval between the LLR means."""


class ProfileError(MacDetectError, ValueError):
    """An energy profile is invalid (negative, empty support, ...)."""


class BudgetError(MacDetectError, RuntimeError):
    """The multiplier search could not meet the energy budget."""


class CalibrationError(MacDetectError, ValueError):
    """Too few trials to calibrate a threshold at the requested level."""


class ConfigError(MacDetectError, ValueError):
    """A configuration failed validation; ``errors`` lists every problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
