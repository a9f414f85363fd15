"""Exception types shared across the package."""


class SliceLabError(Exception):
    """Base class for all slicelab errors."""


class ConfigError(SliceLabError):
    """Invalid configuration value or combination."""


class ProtocolError(SliceLabError):
    """Environment API misuse, e.g. step() after the episode ended."""


class ShapeError(SliceLabError):
    """Tensor/parameter shape mismatch."""


class NumericError(SliceLabError):
    """Non-finite loss or gradient encountered during training."""


class CheckpointError(SliceLabError):
    """Checkpoint missing, unreadable, or schema-incompatible."""


class DatasetError(SliceLabError):
    """Dataset file failed validation or schema checks."""


class StageError(SliceLabError):
    """An experiment stage failed; carries the stage name for CLI exit."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
