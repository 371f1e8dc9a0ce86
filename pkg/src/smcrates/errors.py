"""Exception types raised across the package."""


class SmcRatesError(Exception):
    """Base class for all package errors."""


class DomainError(SmcRatesError, ValueError):
    """An argument lies outside the domain of the operation."""


class ValidityError(SmcRatesError):
    """A closed-form result was requested outside its validity region."""


class GridResolutionError(SmcRatesError):
    """A quadrature grid failed its normalization self-test."""


class GridMismatchError(SmcRatesError, ValueError):
    """Two grid densities do not share nodes."""


class TruncationError(SmcRatesError):
    """A series truncation exceeded its configured cap."""


class ThresholdError(SmcRatesError):
    """The preconditions of an asymptotic bound do not hold."""
