"""
Deterministic random streams, precision handling and small shared helpers.
"""

import hashlib
import random
from typing import Union

import numpy as np
import torch

from .errors import TrainingError
from .models.common import Precision
from .models.config import ExperimentConfig


def seeded_rng(seed: int) -> np.random.Generator:
    """A reproducible numpy stream; equal seeds give equal draws on one platform."""
    return np.random.default_rng(seed)


def seed_everything(seed: int) -> None:
    """Seed the global python, numpy and torch generators used for weight init."""
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def child_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))


def torch_dtype(precision: Union[Precision, str]) -> torch.dtype:
    return torch.float64 if Precision(precision) is Precision.FLOAT64 else torch.float32


def ensure_finite(value: torch.Tensor, name: str) -> torch.Tensor:
    if not torch.isfinite(value).all():
        raise TrainingError(f"{name} contains NaN or Inf")
    return value


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(cfg.model_dump_json().encode()).hexdigest()


def file_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
