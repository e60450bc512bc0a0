"""
Direction checks of the full pipeline on seeded synthetic data.

These run the real schedule at desk scale and take minutes; select them with
`pytest -m slow`.
"""

import numpy as np
import pytest

from action_segmentation.dataio import load_dataset
from action_segmentation.models import SynthSpec, apply_ablations, load_config
from action_segmentation.state import ModelState
from action_segmentation.synth import generate_dataset, write_dataset
from action_segmentation.trainer import linear_probe, pretrain_unsupervised, run_semi_supervised

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)


def _split(root, spec, labelled_fraction, seed):
    write_dataset(generate_dataset(spec), root)
    return load_dataset(root, labelled_fraction, seed)


@pytest.fixture(scope="module")
def probe_split(tmp_path_factory):
    spec = SynthSpec(
        num_videos=20, test_videos=5, num_classes=4, class_prototype_scale=2.0, noise_sigma=0.5, seed=11
    )
    return _split(tmp_path_factory.mktemp("probe"), spec, 0.2, 0)


@pytest.fixture(scope="module")
def schedule_split(tmp_path_factory):
    spec = SynthSpec(num_videos=40, test_videos=10, frames_per_video=512, num_classes=6, noise_sigma=0.8, seed=3)
    return _split(tmp_path_factory.mktemp("schedule"), spec, 0.05, 0)


def _mean(reports, name):
    return float(np.mean([getattr(report, name) for report in reports]))


def test_pretraining_improves_the_linear_probe(probe_split):
    cfg = load_config(preset="synthetic")
    baseline = linear_probe(ModelState.initialize(cfg, probe_split.num_classes), probe_split)
    pretrained = linear_probe(pretrain_unsupervised(probe_split, cfg), probe_split)
    assert pretrained.metrics.acc >= baseline.metrics.acc + 10.0


def test_semi_supervised_beats_supervised_only(schedule_split):
    full, supervised = [], []
    for seed in SEEDS:
        cfg = load_config(preset="synthetic", overrides={"rng_seed": seed})
        full.append(run_semi_supervised(schedule_split, cfg).metrics)
        supervised.append(run_semi_supervised(schedule_split, apply_ablations(cfg, ["supervised-only"])).metrics)
    assert _mean(full, "acc") >= _mean(supervised, "acc") + 5.0
    assert _mean(full, "edit") >= _mean(supervised, "edit") + 5.0


def test_neighbourhood_consistency_improves_segmental_scores(schedule_split):
    with_nca, without_nca = [], []
    for seed in SEEDS:
        cfg = load_config(preset="synthetic", overrides={"rng_seed": seed})
        with_nca.append(run_semi_supervised(schedule_split, cfg).metrics)
        without_nca.append(run_semi_supervised(schedule_split, apply_ablations(cfg, ["no-nca"])).metrics)
    assert _mean(with_nca, "edit") > _mean(without_nca, "edit")
    assert _mean(with_nca, "f1_10") > _mean(without_nca, "f1_10")


@pytest.mark.parametrize("ablation", ["no-aa", "no-pp", "no-ap-neg", "no-dynamic-clustering"])
def test_every_contrast_term_helps_the_probe(probe_split, ablation):
    full, ablated = [], []
    for seed in SEEDS:
        cfg = load_config(preset="synthetic", overrides={"rng_seed": seed})
        full.append(linear_probe(pretrain_unsupervised(probe_split, cfg), probe_split).metrics)
        reduced = apply_ablations(cfg, [ablation])
        ablated.append(linear_probe(pretrain_unsupervised(probe_split, reduced), probe_split).metrics)
    assert _mean(full, "acc") >= _mean(ablated, "acc") - 0.5


@pytest.mark.parametrize("variant", ["dense-positives", "deep-semantic"])
def test_default_positives_and_extractor_are_not_beaten(probe_split, variant):
    default, alternative = [], []
    for seed in SEEDS:
        cfg = load_config(preset="synthetic", overrides={"rng_seed": seed})
        default.append(linear_probe(pretrain_unsupervised(probe_split, cfg), probe_split).metrics)
        changed = apply_ablations(cfg, [variant])
        alternative.append(linear_probe(pretrain_unsupervised(probe_split, changed), probe_split).metrics)
    assert _mean(default, "acc") >= _mean(alternative, "acc") - 0.5
