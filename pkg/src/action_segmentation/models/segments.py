"""
Action segments: maximal runs of one label.
"""

from typing import List, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator


class Segment(NamedTuple):
    label: int
    start: int  # inclusive
    end: int  # exclusive


class SegmentList(BaseModel):
    """Segments tiling [0, T) in order, adjacent ones differing in label."""

    model_config = ConfigDict(frozen=True)

    segments: List[Segment]

    @model_validator(mode="after")
    def _check_tiling(self) -> "SegmentList":
        position = 0
        for i, segment in enumerate(self.segments):
            if segment.start != position or segment.end <= segment.start:
                raise ValueError("segments must tile the sequence without gaps or overlaps")
            if i and self.segments[i - 1].label == segment.label:
                raise ValueError("adjacent segments must have different labels")
            position = segment.end
        return self

    def __len__(self) -> int:
        return len(self.segments)

    def expand(self) -> np.ndarray:
        return np.concatenate([np.full(s.end - s.start, s.label) for s in self.segments])
