import numpy as np
import pytest

from action_segmentation.dataio import load_dataset
from action_segmentation.models import SynthSpec, validate_config
from action_segmentation.synth import generate_dataset, write_dataset


TINY_CONFIG = {
    "feature_dim": 8,
    "embedding_dim": 8,
    "downsample_length": 32,
    "frames_per_video": 8,
    "batch_videos": 3,
    "encoder_depth": 2,
    "encoder_hidden": 8,
    "semantic_hidden": 8,
    "scorer_hidden": 8,
    "nca_window": 4,
    "nca_partners": 3,
    "iterations": 2,
    "epochs_pretrain": 2,
    "epochs_classifier": 4,
    "epochs_joint": 4,
    "probe_epochs": 20,
    "labelled_fraction": 0.5,
    "lr_joint": 1e-3,
}


@pytest.fixture
def tiny_spec():
    return SynthSpec(
        num_videos=6,
        test_videos=2,
        frames_per_video=96,
        num_classes=3,
        feature_dim=8,
        class_prototype_scale=3.0,
        noise_sigma=0.3,
        mean_segment_length=16.0,
        seed=0,
    )


@pytest.fixture
def tiny_config():
    return validate_config(TINY_CONFIG)


@pytest.fixture
def dataset_dir(tmp_path, tiny_spec):
    return write_dataset(generate_dataset(tiny_spec), tmp_path / "data")


@pytest.fixture
def tiny_split(dataset_dir, tiny_config):
    return load_dataset(dataset_dir, tiny_config.labelled_fraction, tiny_config.rng_seed)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

