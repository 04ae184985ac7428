"""Exception types shared across the pipeline."""


class StructuralError(ValueError):
    """A matrix or dataset does not have the shape its dimensions demand."""


class SchemaError(ValueError):
    """An on-disk artifact does not follow the expected layout."""


class ChecksumError(SchemaError):
    """An on-disk artifact was modified after it was written."""


class UndefinedMetricError(ValueError):
    """A metric is not defined for the given inputs (e.g. single-class AUC)."""


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")
