"""Exception types shared across the toolkit."""


class BiaslabError(Exception):
    """Base class for all toolkit errors."""


class IngestionError(BiaslabError):
    """Raised when raw corpus input cannot be consumed."""

    def __init__(self, message, byte_offset=None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class ConfigError(BiaslabError):
    """Invalid configuration, word lists, or experiment inputs."""


class MetricError(BiaslabError):
    """A bias metric cannot be computed from the given counts."""


class UndefinedProbabilityError(MetricError):
    """A conditional probability has a zero marginal in its denominator."""


class DegenerateRegressorError(MetricError):
    """The amplification regression has no usable variance in its inputs."""


class DegenerateSubspaceError(BiaslabError):
    """The defining-set difference matrix carries no gender direction."""


class TrainingDivergedError(BiaslabError):
    """Training produced a non-finite or exploding loss."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (optimizer step {step})"
        super().__init__(message)
        self.step = step


class CheckpointError(BiaslabError):
    """A model checkpoint file is malformed or incompatible."""
