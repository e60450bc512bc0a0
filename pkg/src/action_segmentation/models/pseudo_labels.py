from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class PseudoLabelStore(BaseModel):
    """Classifier predictions for the unlabelled videos at working resolution."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    labels: Dict[str, np.ndarray] = Field(description="Argmax class id per frame [T]")
    confidences: Dict[str, np.ndarray] = Field(description="Max softmax probability per frame [T]")
    num_classes: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_store(self) -> "PseudoLabelStore":
        for video_id, labels in self.labels.items():
            if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise ValueError(f"pseudo-labels of {video_id} fall outside [0, {self.num_classes})")
            confidences = self.confidences.get(video_id)
            if confidences is None or confidences.shape != labels.shape:
                raise ValueError(f"pseudo-label confidences of {video_id} do not match its labels")
        return self

    def __contains__(self, video_id: str) -> bool:
        return video_id in self.labels

    def labels_for(self, video_id: str, threshold: Optional[float] = None) -> np.ndarray:
        """Pseudo-labels of one video; frames below `threshold` confidence become -1."""
        labels = self.labels[video_id].copy()
        if threshold is not None:
            labels[self.confidences[video_id] < threshold] = -1
        return labels
