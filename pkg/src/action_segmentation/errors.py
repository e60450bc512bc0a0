"""
Exception hierarchy for the action segmentation pipeline.

Every error carries the process exit code the CLI reports for it.
"""

from typing import Any


class ActionSegmentationError(Exception):
    """Base class for all pipeline errors."""
    exit_code: int = 4


class ConfigError(ActionSegmentationError):
    """A configuration field violates its constraint."""
    exit_code = 2

    def __init__(self, field: str, value: Any, constraint: str):
        self.field = field
        self.value = value
        self.constraint = constraint
        super().__init__(f"invalid field '{field}' = {value!r}: {constraint}")


class RunExistsError(ActionSegmentationError):
    """A run directory exists and --overwrite was not given."""
    exit_code = 2


class DataError(ActionSegmentationError):
    """Dataset files are missing or inconsistent."""
    exit_code = 3


class MissingFileError(DataError):
    pass


class LengthMismatchError(DataError):
    pass


class UnknownLabelError(DataError):
    pass


class ShapeMismatchError(ActionSegmentationError):
    """A tensor does not have the shape a network or loss expects."""


class ClusteringError(ActionSegmentationError):
    pass


class TrainingError(ActionSegmentationError):
    pass


class LabelLeakError(ActionSegmentationError):
    """Hidden labels of an unlabelled video were read outside evaluation."""
