"""Exception types shared across the package."""


class SpikescanError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(SpikescanError, ValueError):
    """A numeric argument is outside its documented range."""


class ModelError(SpikescanError, ValueError):
    """An intensity model is unusable (negative/unbounded evaluation)."""


class CoverageError(SpikescanError, ValueError):
    """Recorded data does not cover the requested scan range."""


class SubcriticalThresholdError(SpikescanError, ValueError):
    """Threshold at or below the mean score; no positive tilt exists."""


class SpanError(SpikescanError, ValueError):
    """Arithmetic-span detection failed or spans are inconsistent."""


class BranchError(SpikescanError, ValueError):
    """Operation invoked on the wrong kernel branch (continuous vs jump)."""


class DivergenceError(SpikescanError, ValueError):
    """A limit procedure cannot converge (e.g. nonpositive walk drift)."""


class FitFailureError(SpikescanError, RuntimeError):
    """Every optimizer start produced a -inf likelihood."""


class ConfigError(SpikescanError, ValueError):
    """Invalid run configuration."""
