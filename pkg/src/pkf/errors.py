"""Exception and warning types raised across the package."""


class PKFError(Exception):
    """Base class for every error raised by this package."""


class NotPSD(PKFError, ValueError):
    """A matrix that must be positive semidefinite has a clearly negative eigenvalue."""


class DimensionMismatch(PKFError, ValueError):
    pass


class TooFewSamples(PKFError, ValueError):
    pass


class NoConvergence(PKFError, RuntimeError):
    pass


class UnstableA(PKFError, ValueError):
    """The dynamics matrix has spectral radius too close to (or above) one."""


class ScaleExceeded(PKFError, ValueError):
    """The direct oracle was asked to solve a problem above desk scale."""


class ConfigError(PKFError, ValueError):
    pass


class SchemaError(PKFError, ValueError):
    pass


class StaleGains(PKFError, ValueError):
    """A gains file was produced for a different model."""


class UnknownDemo(PKFError, KeyError):
    pass


class InfeasibleSchedule(PKFError, ValueError):
    """A gain schedule violates its noise-covariance constraint at some step."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class AssumptionViolated(UserWarning):
    """Image-containment assumption of the closed-form gain does not hold."""


class NoImprovement(UserWarning):
    """Numeric optimization found no feasible descent from its warm start."""
