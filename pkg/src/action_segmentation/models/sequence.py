"""
Feature sequences and dataset splits.

Hidden labels of unlabelled videos are wrapped in `HiddenLabels`, which only
hands them out inside the `labels_revealed()` evaluation context. Any other
read raises `LabelLeakError`, so training code cannot consume them by
accident.
"""

from contextlib import contextmanager
from contextvars import ContextVar
from typing import Dict, Iterator, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..errors import LabelLeakError

_REVEALED: ContextVar[bool] = ContextVar("labels_revealed", default=False)


@contextmanager
def labels_revealed() -> Iterator[None]:
    """Evaluation-harness context in which hidden labels may be read."""
    token = _REVEALED.set(True)
    try:
        yield
    finally:
        _REVEALED.reset(token)


class HiddenLabels:
    """Ground truth of an unlabelled video, readable only during evaluation."""

    __slots__ = ("_values", "video_id")

    def __init__(self, values: np.ndarray, video_id: str):
        self._values = _frozen(np.asarray(values, dtype=np.int64))
        self.video_id = video_id

    def __len__(self) -> int:
        return len(self._values)

    def reveal(self) -> np.ndarray:
        if not _REVEALED.get():
            raise LabelLeakError(f"hidden labels of '{self.video_id}' read outside the evaluation harness")
        return self._values


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.flags.writeable = False
    return array


def _check_features(value: np.ndarray) -> np.ndarray:
    value = np.asarray(value)
    if value.ndim != 2 or value.shape[0] < 1 or value.shape[1] < 1:
        raise ValueError(f"features must be a non-empty [T x F] matrix, got shape {value.shape}")
    if not np.all(np.isfinite(value)):
        raise ValueError("features contain NaN or Inf")
    return _frozen(value.astype(np.float32, copy=False))


def _check_labels(value: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if value is None:
        return None
    value = np.asarray(value)
    if value.ndim != 1:
        raise ValueError("labels must be a vector")
    if not np.issubdtype(value.dtype, np.integer):
        raise ValueError("labels must be integer class ids")
    if value.size and value.min() < 0:
        raise ValueError("labels must be non-negative class ids")
    return _frozen(value.astype(np.int64))


class FeatureSequence(BaseModel):
    """One video's pre-extracted frame features at original resolution."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    video_id: str = Field(description="Video identifier, the file stem in the dataset layout")
    features: np.ndarray = Field(description="Frame features [T_ori x F]")
    labels: Optional[np.ndarray] = Field(default=None, description="Class id per frame [T_ori]")
    hidden_labels: Optional[HiddenLabels] = Field(
        default=None, description="Ground truth withheld from training (unlabelled videos)"
    )
    source_path: Optional[str] = Field(default=None, description="Feature file the sequence was read from")

    @field_validator("features")
    @classmethod
    def _validate_features(cls, value: np.ndarray) -> np.ndarray:
        return _check_features(value)

    @field_validator("labels")
    @classmethod
    def _validate_labels(cls, value: Optional[np.ndarray]) -> Optional[np.ndarray]:
        return _check_labels(value)

    @model_validator(mode="after")
    def _check_lengths(self) -> "FeatureSequence":
        if self.labels is not None and len(self.labels) != self.num_frames:
            raise ValueError(f"{self.video_id}: {len(self.labels)} labels for {self.num_frames} frames")
        if self.hidden_labels is not None:
            if self.labels is not None:
                raise ValueError(f"{self.video_id}: labels cannot be both visible and hidden")
            if len(self.hidden_labels) != self.num_frames:
                raise ValueError(f"{self.video_id}: hidden labels do not match the frame count")
        return self

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def hide_labels(self) -> "FeatureSequence":
        """Copy of this sequence whose labels are only readable during evaluation."""
        if self.labels is None:
            return self
        return FeatureSequence(
            video_id=self.video_id,
            features=self.features,
            hidden_labels=HiddenLabels(self.labels, self.video_id),
            source_path=self.source_path,
        )

    def ground_truth(self) -> np.ndarray:
        """Visible labels, or hidden ones when called inside `labels_revealed()`."""
        if self.labels is not None:
            return self.labels
        if self.hidden_labels is not None:
            return self.hidden_labels.reveal()
        raise ValueError(f"{self.video_id} has no labels")


class DownsampledSequence(BaseModel):
    """A sequence reduced to the configured temporal length T."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    features: np.ndarray = Field(description="Pooled features [T x F]")
    labels: Optional[np.ndarray] = Field(default=None, description="Majority labels [T]")
    t_original: int = Field(ge=1, description="Frame count before down-sampling")
    repeated: bool = Field(default=False, description="True when T exceeded the original length")

    @field_validator("features")
    @classmethod
    def _validate_features(cls, value: np.ndarray) -> np.ndarray:
        return _check_features(value)

    @field_validator("labels")
    @classmethod
    def _validate_labels(cls, value: Optional[np.ndarray]) -> Optional[np.ndarray]:
        return _check_labels(value)

    @property
    def length(self) -> int:
        return self.features.shape[0]


class DatasetSplit(BaseModel):
    """Labelled and unlabelled training videos plus an optional held-out test set."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    labelled: List[FeatureSequence] = Field(description="D_L, videos with visible labels")
    unlabelled: List[FeatureSequence] = Field(description="D_U, videos whose labels are hidden")
    test: List[FeatureSequence] = Field(default_factory=list, description="Held-out evaluation videos")
    class_map: Dict[str, int] = Field(description="Action name to class id")

    @model_validator(mode="after")
    def _check_split(self) -> "DatasetSplit":
        if sorted(self.class_map.values()) != list(range(len(self.class_map))):
            raise ValueError("class ids must be contiguous from 0")
        ids = [seq.video_id for seq in self.labelled + self.unlabelled + self.test]
        if len(ids) != len(set(ids)):
            raise ValueError("video ids of labelled, unlabelled and test videos must be disjoint")
        for seq in self.labelled:
            if seq.labels is None:
                raise ValueError(f"labelled video {seq.video_id} has no labels")
        for seq in self.unlabelled:
            if seq.labels is not None:
                raise ValueError(f"unlabelled video {seq.video_id} exposes its labels")
        for seq in self.labelled + self.test:
            if seq.labels is not None and seq.labels.size and seq.labels.max() >= self.num_classes:
                raise ValueError(f"{seq.video_id} has class ids outside [0, {self.num_classes})")
        return self

    @property
    def num_classes(self) -> int:
        return len(self.class_map)

    @property
    def training(self) -> List[FeatureSequence]:
        return self.labelled + self.unlabelled

    @property
    def class_names(self) -> List[str]:
        return [name for name, _ in sorted(self.class_map.items(), key=lambda item: item[1])]

    @property
    def evaluation(self) -> List[FeatureSequence]:
        """Test videos, or every training video when no test set exists."""
        return self.test if self.test else self.training
