"""
Cluster assignments and the negative-pair masks built from them.
"""

from typing import Tuple

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator


class ClusterAssignment(BaseModel):
    """k-means result on one view of a sampled batch."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    labels: np.ndarray = Field(description="Cluster id per row, in [0, k)")
    centroids: np.ndarray = Field(description="Centroids [k x dim]")
    inertia: float = Field(ge=0.0, description="Sum of squared distances to the assigned centroids")


class PairMask(BaseModel):
    """Symmetric 0/1 matrix with zero diagonal selecting negative pairs."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    m: torch.Tensor = Field(description="Pair selector [rows x rows]")
    views: Tuple[ClusterAssignment, ...] = Field(default=(), description="Clusterings the mask was built from")

    @field_validator("m")
    @classmethod
    def _check_mask(cls, m: torch.Tensor) -> torch.Tensor:
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"pair mask must be square, got {tuple(m.shape)}")
        if not torch.equal(m, m.T):
            raise ValueError("pair mask must be symmetric")
        if torch.any(torch.diagonal(m) != 0):
            raise ValueError("pair mask must have a zero diagonal")
        if torch.any((m != 0) & (m != 1)):
            raise ValueError("pair mask entries must be 0 or 1")
        return m

    @property
    def count(self) -> int:
        return int(self.m.sum())
