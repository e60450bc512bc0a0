"""
Synthetic action-segmentation datasets.

Labels follow a first-order Markov chain over classes with geometric segment
dwell; features are class prototypes plus Gaussian noise plus a slow
sinusoidal drift shared across classes, so purely frame-wise models stay
imperfect and temporal context pays off.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Union

import numpy as np

from .core import seeded_rng
from .dataio import write_features, write_labels, write_mapping
from .models import FeatureSequence, SynthSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticDataset:
    sequences: List[FeatureSequence]
    test_ids: List[str]
    class_names: List[str]
    prototypes: np.ndarray


def stationary_distribution(transitions: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = np.linalg.eig(transitions.T)
    vector = np.real(eigenvectors[:, np.argmin(np.abs(eigenvalues - 1.0))])
    vector = np.abs(vector)
    return vector / vector.sum()


def sample_labels(spec: SynthSpec, rng: np.random.Generator, stationary: np.ndarray) -> np.ndarray:
    transitions = spec.transitions()
    labels = np.empty(spec.frames_per_video, dtype=np.int64)
    t = 0
    current = rng.choice(spec.num_classes, p=stationary)
    while t < spec.frames_per_video:
        dwell = int(rng.geometric(1.0 / spec.mean_segment_length))
        labels[t:t + dwell] = current
        t += dwell
        current = rng.choice(spec.num_classes, p=transitions[current])
    return labels


def generate_dataset(spec: SynthSpec) -> SyntheticDataset:
    """Generate every video of the spec in memory; fully determined by spec.seed."""
    rng = seeded_rng(spec.seed)
    prototypes = rng.standard_normal((spec.num_classes, spec.feature_dim))
    prototypes *= spec.class_prototype_scale / np.linalg.norm(prototypes, axis=1, keepdims=True)
    drift_direction = rng.standard_normal(spec.feature_dim)
    drift_direction /= np.linalg.norm(drift_direction)
    stationary = stationary_distribution(spec.transitions())
    frames = np.arange(spec.frames_per_video)

    sequences = []
    for index in range(spec.num_videos + spec.test_videos):
        labels = sample_labels(spec, rng, stationary)
        noise = rng.standard_normal((spec.frames_per_video, spec.feature_dim)) * spec.noise_sigma
        phase = rng.uniform(0.0, 2.0 * np.pi)
        drift = np.sin(2.0 * np.pi * frames / spec.drift_period + phase)
        drift = (spec.noise_sigma * spec.drift_ratio * drift)[:, None] * drift_direction
        sequences.append(
            FeatureSequence(
                video_id=f"video_{index:03d}",
                features=prototypes[labels] + noise + drift,
                labels=labels,
            )
        )
    test_ids = [seq.video_id for seq in sequences[spec.num_videos:]]
    class_names = [f"action_{class_id}" for class_id in range(spec.num_classes)]
    return SyntheticDataset(sequences, test_ids, class_names, prototypes)


def write_dataset(dataset: SyntheticDataset, out_dir: Union[str, Path]) -> Path:
    """Write the dataio directory layout for a generated dataset."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    write_mapping(root, dataset.class_names)
    for seq in dataset.sequences:
        write_features(root / "features", seq.video_id, seq.features)
        write_labels(root / "groundTruth" / f"{seq.video_id}.txt", seq.labels, dataset.class_names)
    if dataset.test_ids:
        (root / "splits").mkdir(exist_ok=True)
        (root / "splits" / "test.txt").write_text("\n".join(dataset.test_ids) + "\n")
    logger.info("Wrote %d synthetic videos to %s", len(dataset.sequences), root)
    return root
