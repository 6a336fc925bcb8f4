"""Exception types shared across the package."""


class HPEError(Exception):
    """Base class for all package errors."""


class SingularPair(HPEError, ValueError):
    """Unregularized kernel evaluated at coincident points."""


class EmptyField(HPEError, ValueError):
    """A field or blob set carries no vorticity where some is required."""


class InsufficientResolution(HPEError, ValueError):
    pass


class TreeDepthExceeded(UserWarning):
    """Coincident blobs forced the quadtree past its depth limit.

    Emitted as a warning: the offending blobs are merged into a single leaf
    and the build continues.
    """


class DegenerateStencil(HPEError, ValueError):
    pass


class VelocityEvaluationFailure(HPEError, RuntimeError):
    pass


class InvalidConstant(HPEError, ValueError):
    pass


class NonConvergence(HPEError, RuntimeError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class CalibrationFailure(HPEError, RuntimeError):
    pass


class ExponentMismatch(HPEError, ValueError):
    pass


class ZeroDenominator(HPEError, ZeroDivisionError):
    """A ratio probe was handed a field whose reference norm vanishes."""


class ConfigError(HPEError, ValueError):
    pass


class NumericAbort(HPEError, FloatingPointError):
    """A diagnostic went non-finite; the run stops after flushing records."""
