"""
Parameters of a generated dataset.

A generated video is a first-order Markov chain over action classes with
geometric segment dwell. Each frame is its class prototype plus isotropic
Gaussian noise plus a slow sinusoidal drift shared by all classes.
"""

from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import ConfigError
from .config import PRESETS_PATH


class SynthSpec(BaseModel):
    """Knobs of the synthetic dataset generator."""

    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    num_videos: int = Field(default=40, ge=1, description="Training videos to generate")
    test_videos: int = Field(default=0, ge=0, description="Extra videos listed in splits/test.txt")
    frames_per_video: int = Field(default=512, ge=1, description="T_ori of every video")
    num_classes: int = Field(default=6, ge=1, description="Number of action classes A")
    feature_dim: int = Field(default=32, ge=1, description="Feature dimension F")
    class_prototype_scale: float = Field(default=2.0, ge=0.0, description="Norm of each class prototype")
    noise_sigma: float = Field(default=0.5, ge=0.0, description="Standard deviation of the frame noise")
    mean_segment_length: float = Field(default=48.0, ge=1.0, description="Mean geometric dwell in frames")
    transition_matrix: Optional[List[List[float]]] = Field(
        default=None,
        description="Row-stochastic A x A class transitions; uniform over the other classes when unset",
    )
    drift_ratio: float = Field(
        default=1.0, ge=0.0, description="Drift amplitude relative to noise_sigma (no drift without noise)"
    )
    drift_period: float = Field(default=256.0, gt=0.0, description="Drift period in frames")
    seed: int = Field(default=0, ge=0, description="Seed of the generator")

    @model_validator(mode="after")
    def _check_transitions(self) -> "SynthSpec":
        if self.transition_matrix is None:
            return self
        matrix = np.asarray(self.transition_matrix, dtype=np.float64)
        if matrix.shape != (self.num_classes, self.num_classes):
            raise ValueError(f"transition_matrix must be {self.num_classes}x{self.num_classes}")
        if np.any(matrix < 0) or np.any(np.abs(matrix.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("transition_matrix rows must be non-negative and sum to 1")
        return self

    def transitions(self) -> np.ndarray:
        if self.transition_matrix is not None:
            return np.asarray(self.transition_matrix, dtype=np.float64)
        if self.num_classes == 1:
            return np.ones((1, 1))
        matrix = np.full((self.num_classes, self.num_classes), 1.0 / (self.num_classes - 1))
        np.fill_diagonal(matrix, 0.0)
        return matrix


def load_synth_spec(path: Optional[Union[str, Path]] = None) -> SynthSpec:
    """
    Read a generator spec from a YAML or JSON file, or the `synth` block of
    the packaged presets when no path is given.

    Raises:
        ConfigError: for a missing file or a field that violates its constraint.
    """
    if path is None:
        data = yaml.safe_load(PRESETS_PATH.read_text())["synth"]
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError("spec", str(path), "file does not exist")
        data = yaml.safe_load(path.read_text()) or {}
    try:
        return SynthSpec.model_validate(data)
    except ValidationError as exc:
        error = exc.errors()[0]
        field = ".".join(str(part) for part in error["loc"]) or "<spec>"
        raise ConfigError(field, error.get("input"), error["msg"]) from exc
