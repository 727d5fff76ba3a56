"""Shared exception types."""


class SphericalSKError(Exception):
    """Base class for all package errors."""


class MixtureError(SphericalSKError, ValueError):
    """Invalid mixture polynomial, or an argument outside its domain."""


class ValidationError(SphericalSKError, ValueError):
    """Argument outside a documented cap or an inconsistent configuration."""


class RegionError(SphericalSKError, RuntimeError):
    """Parameters fall outside the validated high-temperature region."""


class EngineConsistencyError(SphericalSKError, RuntimeError):
    """Two internal computation routes disagreed; signals a bug, not bad input."""


class NumericsError(SphericalSKError, RuntimeError):
    """A quadrature or linear solve failed to reach its accuracy target."""
