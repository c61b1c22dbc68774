"""Exception types shared across the package."""


class WkgError(Exception):
    """Base class for package errors."""


class DomainError(WkgError, ValueError):
    """Point or parameter outside the region where a quantity is defined."""


class RangeError(WkgError, ValueError):
    """Requested time/radius is outside stored data."""


class ArgumentError(WkgError, ValueError):
    """Malformed argument (wrong length, bad name, ...)."""


class ConfigurationError(WkgError, ValueError):
    """Invalid run configuration (CFL, grid extent, unknown check, ...)."""


class NumericError(WkgError, FloatingPointError):
    """Non-finite values produced during evolution."""


class CapabilityError(WkgError, NotImplementedError):
    """Request exceeds what the implementation supports."""


class PreconditionError(WkgError, ValueError):
    """Hypothesis of an estimate is not satisfied by the inputs."""


class InsufficientDataError(WkgError, ValueError):
    """Too few samples for a fit or a convergence estimate."""
