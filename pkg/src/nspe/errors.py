"""Exception hierarchy shared by all nspe modules."""


class NSPEError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(NSPEError, ValueError):
    """Invalid network or experiment configuration."""


class UnknownTaskError(NSPEError, KeyError):
    """A task id that is not part of the task universe."""


class InterestError(NSPEError, ValueError):
    """A node was asked about a task it is not interested in."""


class PolicyError(NSPEError, ValueError):
    """Combination weights that cannot be built or violate the simplex constraint."""


class ModelError(NSPEError, ValueError):
    """Dimension mismatch between estimates, regressors and observations."""


class ExchangeError(NSPEError, KeyError):
    """An estimate that should have been exchanged between neighbors is missing."""


class CalibrationError(NSPEError, ValueError):
    """No regressor variance in (0, 1) reaches the requested SNR range."""

    def __init__(self, message, achievable=None):
        super().__init__(message)
        self.achievable = achievable


class MetricError(NSPEError, ValueError):
    """A metric was requested over an empty group."""
