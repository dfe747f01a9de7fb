"""Exception types shared across the package."""


class SphmaxError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(SphmaxError):
    """Ambient dimension outside the supported range or inconsistent operands."""


class PreconditionError(SphmaxError):
    """A documented hypothesis of a bound or estimator is violated."""


class ValidationError(SphmaxError):
    """Malformed input value (bad radius, thickness, weight vector, ...)."""
