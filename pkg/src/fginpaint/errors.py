"""Exception types shared across the package."""


class FGInpaintError(Exception):
    """Base class for all package errors."""


class ConfigError(FGInpaintError, ValueError):
    """Invalid or unknown configuration values."""


class ContractError(FGInpaintError, ValueError):
    """An input violates an operation's precondition (shape, range, binarity)."""


class SamplingError(FGInpaintError, RuntimeError):
    """Hole sampling could not satisfy the area-ratio bounds within the retry limit."""

    def __init__(self, message, achieved_ratio=None):
        super().__init__(message)
        self.achieved_ratio = achieved_ratio


class AttentionError(FGInpaintError, RuntimeError):
    """Contextual attention found no fully valid background patch."""


class CheckpointError(FGInpaintError, RuntimeError):
    """A checkpoint is missing, corrupt, or incompatible with the target model."""


class TrainingDivergedError(FGInpaintError, RuntimeError):
    """A loss became non-finite during training."""

    def __init__(self, message, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


class DetectorError(FGInpaintError, RuntimeError):
    """A saliency detector returned an invalid mask."""
