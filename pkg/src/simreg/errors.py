"""Exception types shared across the package."""


class SimregError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SimregError, ValueError):
    """An argument violates a documented precondition."""


class DataFormatError(SimregError, ValueError):
    """A data file could not be parsed; the message names the offending line."""


class DegenerateInputError(SimregError, ValueError):
    """Statistic undefined for this input (e.g. rank correlation of a constant)."""


class ConfigError(SimregError, ValueError):
    """A run configuration failed validation."""


class CheckpointError(SimregError, ValueError):
    """A checkpoint file is missing, corrupt, or inconsistent."""


class TrainingError(SimregError, RuntimeError):
    """Training aborted (e.g. non-finite loss)."""
