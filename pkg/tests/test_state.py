import numpy as np
import pytest
import torch

from action_segmentation.core import config_hash
from action_segmentation.models import validate_config
from action_segmentation.state import ModelState
from action_segmentation.trainer import RunLog, stage1_supervised


def _ids(params):
    return {id(p) for p in params}


def test_optimizer_groups(tiny_config):
    state = ModelState.initialize(tiny_config, num_classes=3)
    pretrain = state.optimizers["pretrain"].param_groups
    assert len(pretrain) == 1
    assert pretrain[0]["lr"] == tiny_config.lr_temporal_semantic
    assert _ids(pretrain[0]["params"]) == _ids(list(state.temporal.parameters()) + list(state.semantic.parameters()))

    joint, classifier = state.optimizers["stage"].param_groups
    assert joint["lr"] == tiny_config.lr_joint and joint["weight_decay"] == tiny_config.wd_joint
    assert classifier["lr"] == tiny_config.lr_classifier
    assert _ids(classifier["params"]) == _ids(state.classifier.parameters())
    assert not _ids(joint["params"]) & _ids(classifier["params"])
    assert _ids(state.scorer.parameters()) <= _ids(joint["params"])


def test_initialization_is_seeded(tiny_config):
    first = ModelState.initialize(tiny_config, 3)
    second = ModelState.initialize(tiny_config, 3)
    for a, b in zip(first.temporal.parameters(), second.temporal.parameters()):
        assert torch.equal(a, b)
    assert first.rng.integers(1 << 30) == second.rng.integers(1 << 30)


def test_precision_switch(tiny_config):
    state = ModelState.initialize(validate_config({**tiny_config.model_dump(), "precision": "float64"}), 3)
    assert state.dtype is torch.float64
    assert all(p.dtype is torch.float64 for network in state.networks().values() for p in network.parameters())


def test_snapshot_and_restore(tiny_config):
    state = ModelState.initialize(tiny_config, 3)
    saved = state.snapshot()
    with torch.no_grad():
        for p in state.classifier.parameters():
            p.add_(1.0)
        for p in state.temporal.parameters():
            p.add_(1.0)
    state.restore(saved, ["classifier"])
    assert torch.equal(state.classifier.linear.weight, saved["classifier"]["linear.weight"])
    assert not torch.equal(next(state.temporal.parameters()), next(iter(saved["temporal"].values())))


def test_save_and_load_round_trip(tmp_path, tiny_config):
    state = ModelState.initialize(tiny_config, 3)
    state.epochs["stage1"] = 5
    state.rng.integers(10, size=7)
    path = state.save(tmp_path / "ckpt.bin")
    restored = ModelState.load(path)
    assert restored.epochs == state.epochs
    assert restored.num_classes == 3
    assert config_hash(restored.config) == config_hash(state.config)
    for name, network in state.networks().items():
        for key, value in network.state_dict().items():
            assert torch.equal(value, getattr(restored, name).state_dict()[key])
    assert np.array_equal(restored.rng.integers(1 << 30, size=4), state.rng.integers(1 << 30, size=4))


def test_resuming_reproduces_the_next_epoch(tmp_path, tiny_split, tiny_config):
    cfg = tiny_config.model_copy(update={"epochs_stage1": 1})
    state = ModelState.initialize(cfg, tiny_split.num_classes)
    stage1_supervised(state, tiny_split, cfg)
    path = state.save(tmp_path / "ckpt.bin")

    uninterrupted = RunLog()
    stage1_supervised(state, tiny_split, cfg, run_log=uninterrupted)

    resumed = RunLog()
    stage1_supervised(ModelState.load(path), tiny_split, cfg, run_log=resumed)

    assert resumed.reports[0].epoch == uninterrupted.reports[0].epoch == 2
    assert resumed.reports[0].losses == pytest.approx(uninterrupted.reports[0].losses, rel=1e-6)
