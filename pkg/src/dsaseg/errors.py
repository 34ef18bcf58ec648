class DsaError(Exception):
    """Base class for all errors raised by dsaseg."""


class DimensionError(DsaError, ValueError):
    """Tensor shapes are incompatible with an operation."""


class UsageError(DsaError, ValueError):
    """An API was called in a way its contract forbids."""


class NumericalError(DsaError, FloatingPointError):
    """A primitive produced NaN or Inf from finite inputs."""


class FormatError(DsaError, ValueError):
    """An on-disk file does not match its documented format."""

    def __init__(self, message, path=None):
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path


class ConfigError(DsaError, ValueError):
    """A configuration is internally inconsistent."""


class DataError(DsaError, ValueError):
    """Input data violates a value constraint (e.g. class index out of range)."""


class GenerationError(DataError):
    """A phantom specification cannot be realised on its canvas."""
