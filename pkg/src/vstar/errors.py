"""Exception hierarchy shared by all modules.

Each class carries the CLI exit code it maps to.
"""
from __future__ import annotations


class VstarError(Exception):
    exit_code = 1


class ValidationError(VstarError, ValueError):
    """Bad user input: parameters, shapes, configuration."""

    exit_code = 2


class ShapeError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class ConfigurationError(ValidationError):
    pass


class CapabilityError(ValidationError):
    """Requested an order or quantity the discretization cannot deliver."""


class ResolutionError(ValidationError):
    """Grid too coarse for the requested construction."""


class DataIncompatibilityError(ValidationError):
    pass


class NumericalError(VstarError):
    exit_code = 3


class ShellCrossingError(NumericalError):
    pass


class BlowupError(NumericalError):
    pass


class IOFailure(VstarError, OSError):
    exit_code = 4
