"""Typed failures raised across the library."""


class MvflowError(Exception):
    """Base class for library errors."""


class MeasureError(MvflowError, ValueError):
    """Invalid measure or kernel: negative weights, bad normalization, shape mismatch."""


class DomainError(MvflowError, ValueError):
    """A function could not be evaluated on a support point."""


class ParameterError(MvflowError, ValueError):
    """A parameter lies outside its admissible range."""


class ExtinctionError(MvflowError, ArithmeticError):
    """A normalizing constant vanished, so the flow cannot continue."""


class DegeneratePotentialError(ExtinctionError):
    """eta(G) = 0 in a Boltzmann-Gibbs transformation."""


class AdmissibilityError(MvflowError, ValueError):
    """Rate composition rejected; ``inequality`` names the violated condition."""

    def __init__(self, message, inequality=None, lhs=None, rhs=None):
        super().__init__(message)
        self.inequality = inequality
        self.lhs = lhs
        self.rhs = rhs


class ConfigError(MvflowError, ValueError):
    """Invalid or inconsistent harness configuration."""
