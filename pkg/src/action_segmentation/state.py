"""
Model state: the four networks, their optimizers, epoch counters and the
run's random stream, plus the checkpoint format.

A checkpoint is one torch archive holding named parameter tensors,
optimizer states, the generator states and a metadata record (config hash,
epochs, seed) next to the config itself.
"""

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import torch
import torch.nn as nn

from .core import config_hash, seed_everything, seeded_rng, torch_dtype
from .models import ExperimentConfig, Phase, validate_config
from .networks import LinearClassifier, NCAScorer, SemanticExtractor, TemporalEncoder

logger = logging.getLogger(__name__)

NETWORKS = ("temporal", "semantic", "scorer", "classifier")


def build_optimizers(
    temporal: nn.Module,
    semantic: nn.Module,
    scorer: nn.Module,
    classifier: nn.Module,
    cfg: ExperimentConfig,
) -> Dict[str, torch.optim.Optimizer]:
    """
    One Adam per phase, each with the learning rate and weight decay of its
    model group: (T:S) for pretraining, (T:G:S) plus C for the
    semi-supervised stages.
    """
    temporal_semantic = list(temporal.parameters()) + list(semantic.parameters())
    return {
        "pretrain": torch.optim.Adam(
            temporal_semantic, lr=cfg.lr_temporal_semantic, weight_decay=cfg.wd_temporal_semantic
        ),
        "stage": torch.optim.Adam(
            [
                {
                    "params": temporal_semantic + list(scorer.parameters()),
                    "lr": cfg.lr_joint,
                    "weight_decay": cfg.wd_joint,
                    "name": "temporal_scorer_semantic",
                },
                {
                    "params": list(classifier.parameters()),
                    "lr": cfg.lr_classifier,
                    "weight_decay": cfg.wd_classifier,
                    "name": "classifier",
                },
            ]
        ),
    }


@dataclass
class ModelState:
    """Everything a trainer owns during a run. Single writer: only the trainer mutates it."""
    config: ExperimentConfig
    num_classes: int
    temporal: TemporalEncoder
    semantic: SemanticExtractor
    scorer: NCAScorer
    classifier: LinearClassifier
    optimizers: Dict[str, torch.optim.Optimizer]
    rng: np.random.Generator
    epochs: Dict[str, int] = field(default_factory=lambda: {phase.value: 0 for phase in Phase})

    @classmethod
    def initialize(cls, cfg: ExperimentConfig, num_classes: int) -> "ModelState":
        cfg = validate_config(cfg)
        seed_everything(cfg.rng_seed)
        dtype = torch_dtype(cfg.precision)
        temporal = TemporalEncoder(
            cfg.feature_dim, cfg.encoder_hidden, cfg.embedding_dim, cfg.encoder_depth, cfg.encoder_kernel
        ).to(dtype)
        semantic = SemanticExtractor(
            cfg.feature_dim, cfg.semantic_hidden, cfg.embedding_dim, cfg.semantic_kind, cfg.semantic_layers
        ).to(dtype)
        scorer = NCAScorer(cfg.embedding_dim, cfg.scorer_hidden).to(dtype)
        classifier = LinearClassifier(cfg.embedding_dim, num_classes).to(dtype)
        optimizers = build_optimizers(temporal, semantic, scorer, classifier, cfg)
        return cls(cfg, num_classes, temporal, semantic, scorer, classifier, optimizers, seeded_rng(cfg.rng_seed))

    @property
    def dtype(self) -> torch.dtype:
        return torch_dtype(self.config.precision)

    def networks(self) -> Dict[str, nn.Module]:
        return {name: getattr(self, name) for name in NETWORKS}

    def train(self, *names: str) -> None:
        for name, network in self.networks().items():
            network.train(name in names)

    def snapshot(self) -> Dict[str, dict]:
        """Deep copy of all network weights, used to keep the best model of a phase."""
        return {name: copy.deepcopy(network.state_dict()) for name, network in self.networks().items()}

    def restore(self, snapshot: Dict[str, dict], names: Optional[List[str]] = None) -> None:
        for name in names or list(snapshot):
            getattr(self, name).load_state_dict(snapshot[name])

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(
            {
                "params": {name: network.state_dict() for name, network in self.networks().items()},
                "optimizers": {name: optimizer.state_dict() for name, optimizer in self.optimizers.items()},
                "rng": self.rng.bit_generator.state,
                "torch_rng": torch.get_rng_state(),
                "config": self.config.model_dump(mode="json"),
                "meta": {
                    "config_hash": config_hash(self.config),
                    "epochs": dict(self.epochs),
                    "seed": self.config.rng_seed,
                    "num_classes": self.num_classes,
                },
            },
            path,
        )
        logger.info("Saved checkpoint %s", path)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ModelState":
        archive = torch.load(Path(path), map_location="cpu", weights_only=False)
        cfg = validate_config(archive["config"])
        if config_hash(cfg) != archive["meta"]["config_hash"]:
            logger.warning("Config hash of %s does not match its stored config", path)
        state = cls.initialize(cfg, archive["meta"]["num_classes"])
        for name, params in archive["params"].items():
            getattr(state, name).load_state_dict(params)
        for name, optimizer_state in archive["optimizers"].items():
            state.optimizers[name].load_state_dict(optimizer_state)
        state.rng.bit_generator.state = archive["rng"]
        torch.set_rng_state(archive["torch_rng"])
        state.epochs = dict(archive["meta"]["epochs"])
        return state
