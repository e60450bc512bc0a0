"""
Experiment configuration.

The config file is a flat JSON object whose keys match the field names of
`ExperimentConfig` exactly. Unknown keys are rejected. Defaults follow the
hyperparameters reported for the small benchmark datasets.
"""

import json
import logging
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_core import PydanticCustomError

from ..errors import ConfigError
from .common import Ablation, MaskMode, PositiveMode, Precision, SemanticKind

logger = logging.getLogger(__name__)

PRESETS_PATH = Path(__file__).resolve().parent.parent / "config" / "presets.yaml"


class ExperimentConfig(BaseModel):
    """All knobs of a training run: data shapes, losses, optimisation and evaluation."""

    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    # Shapes
    feature_dim: int = Field(default=64, ge=1, description="Input feature dimension F.")
    embedding_dim: int = Field(default=64, ge=1, description="Embedding dimension D of X and H.")
    downsample_length: int = Field(default=256, ge=1, description="Frames T after down-sampling.")
    frames_per_video: int = Field(default=64, ge=1, description="Frames T_s sampled per video for contrast.")
    batch_videos: int = Field(default=5, ge=1, description="Videos N per minibatch.")

    # Contrast
    scale_factor: float = Field(default=1.0, gt=0.0, le=1.0, description="Scale factor xi dividing similarities.")
    temperature: float = Field(default=0.1, gt=0.0, description="InfoNCE temperature tau (baseline only).")
    num_clusters: Optional[int] = Field(
        default=None, ge=2, description="k for k-means pair mining; defaults to the number of classes."
    )
    mask_mode: MaskMode = Field(default=MaskMode.DYNAMIC, description="Negative-pair mining mode.")
    positive_mode: PositiveMode = Field(default=PositiveMode.DIAGONAL, description="Positive-pair selector.")
    normalize_embeddings: bool = Field(default=False, description="L2-normalise embeddings before contrast.")

    # Neighbourhood consistency
    nca_window: int = Field(default=8, ge=2, description="Neighbourhood length W in frames (even).")
    nca_anchors: int = Field(default=1, ge=1, description="Anchors K per labelled video.")
    nca_partners: int = Field(default=10, ge=1, description="Same- and different-label partners M per anchor.")

    # Networks
    precision: Precision = Field(default=Precision.FLOAT32, description="float64 for gradient checks.")
    encoder_depth: int = Field(default=3, ge=1, description="Encoder/decoder stages of the temporal network.")
    encoder_hidden: int = Field(default=64, ge=1, description="Channels of the temporal network.")
    encoder_kernel: int = Field(default=3, ge=1, description="Temporal convolution kernel size (odd).")
    semantic_kind: SemanticKind = Field(default=SemanticKind.MLP, description="Semantic extractor variant.")
    semantic_hidden: int = Field(default=64, ge=1, description="Hidden width of the semantic extractor.")
    semantic_layers: int = Field(default=1, ge=1, description="Hidden layers of the deep_mlp extractor.")
    scorer_hidden: int = Field(default=64, ge=1, description="Hidden width of the NCA scorer.")

    # Schedule
    iterations: int = Field(default=4, ge=1, description="Outer semi-supervised iterations I.")
    epochs_pretrain: int = Field(default=100, ge=0, description="E1, unsupervised pretraining epochs.")
    epochs_classifier: int = Field(default=400, ge=0, description="Total classifier epochs over all iterations.")
    epochs_joint: int = Field(default=400, ge=0, description="Total (T:G:S) epochs over all iterations.")
    epochs_stage1: Optional[int] = Field(default=None, ge=0, description="E2; epochs_classifier / I when unset.")
    epochs_stage2: Optional[int] = Field(default=None, ge=0, description="E3; epochs_joint / I when unset.")
    probe_epochs: int = Field(default=100, ge=1, description="Full-batch steps of the linear probe.")

    # Optimisation
    lr_temporal_semantic: float = Field(default=1e-3, gt=0.0, description="Learning rate of (T:S) pretraining.")
    wd_temporal_semantic: float = Field(default=1e-3, ge=0.0, description="Weight decay of (T:S) pretraining.")
    lr_classifier: float = Field(default=1e-2, gt=0.0, description="Learning rate of C.")
    wd_classifier: float = Field(default=1e-3, ge=0.0, description="Weight decay of C.")
    lr_joint: float = Field(default=1e-5, gt=0.0, description="Learning rate of (T:G:S) in both stages.")
    wd_joint: float = Field(default=1e-3, ge=0.0, description="Weight decay of (T:G:S) in both stages.")

    # Loss weights
    weight_ap_pos: float = Field(default=1.0, ge=0.0, description="Semantic-temporal positive term.")
    weight_ap_neg: float = Field(default=1.0, ge=0.0, description="Semantic-temporal negative term.")
    weight_aa_neg: float = Field(default=1.0, ge=0.0, description="Semantic-semantic negative term.")
    weight_pp_neg: float = Field(default=1.0, ge=0.0, description="Temporal-temporal negative term.")
    weight_nca: float = Field(default=1.0, ge=0.0, description="Neighbourhood consistency term.")
    weight_ce: float = Field(default=1.0, ge=0.0, description="Frame-wise cross-entropy term.")

    # Data and labels
    labelled_fraction: float = Field(default=0.05, gt=0.0, le=1.0, description="Fraction of labelled videos.")
    test_fraction: float = Field(
        default=0.0, ge=0.0, lt=1.0, description="Held-out test fraction when the dataset has no test split."
    )
    pseudo_label_threshold: Optional[float] = Field(
        default=None, gt=0.0, lt=1.0, description="Minimum confidence for a pseudo-label to be used."
    )
    supervised_only: bool = Field(default=False, description="Skip pretraining and the pseudo-label stage.")
    ignore_classes: Tuple[int, ...] = Field(default=(), description="Class ids excluded from every metric.")

    # Reproducibility
    rng_seed: int = Field(default=0, ge=0, description="Seed of every random stream of the run.")
    log_wall_clock: bool = Field(
        default=False, description="Record wall-clock seconds in log.csv; off keeps logs byte-identical."
    )

    @field_validator("nca_window")
    @classmethod
    def _window_is_even(cls, value: int) -> int:
        if value % 2:
            raise PydanticCustomError("even", "must be even")
        return value

    @field_validator("encoder_kernel")
    @classmethod
    def _kernel_is_odd(cls, value: int) -> int:
        if value % 2 == 0:
            raise PydanticCustomError("odd", "must be odd")
        return value

    @model_validator(mode="after")
    def _check_lengths(self) -> "ExperimentConfig":
        if self.nca_window >= self.downsample_length:
            raise PydanticCustomError(
                "cross_field",
                "nca_window={value} must be smaller than downsample_length={limit}",
                {"field": "nca_window", "value": self.nca_window, "limit": self.downsample_length},
            )
        if self.frames_per_video > self.downsample_length:
            raise PydanticCustomError(
                "cross_field",
                "frames_per_video={value} must not exceed downsample_length={limit}",
                {"field": "frames_per_video", "value": self.frames_per_video, "limit": self.downsample_length},
            )
        if self.num_clusters is not None and self.frames_per_video < self.num_clusters:
            raise PydanticCustomError(
                "cross_field",
                "frames_per_video={value} must be at least num_clusters={limit}",
                {"field": "frames_per_video", "value": self.frames_per_video, "limit": self.num_clusters},
            )
        return self

    @property
    def stage1_epochs(self) -> int:
        return self.epochs_stage1 if self.epochs_stage1 is not None else self.epochs_classifier // self.iterations

    @property
    def stage2_epochs(self) -> int:
        return self.epochs_stage2 if self.epochs_stage2 is not None else self.epochs_joint // self.iterations

    def clusters_for(self, num_classes: int) -> int:
        return self.num_clusters if self.num_clusters is not None else max(2, num_classes)

    def check_clusters(self, num_classes: int) -> int:
        """k for a dataset of `num_classes`; every sampled video must hold at least k frames."""
        k = self.clusters_for(num_classes)
        if self.frames_per_video < k:
            raise ConfigError("frames_per_video", self.frames_per_video, f"must be at least the k-means k={k}")
        return k


def _config_error(exc: ValidationError) -> ConfigError:
    error = exc.errors()[0]
    ctx = error.get("ctx") or {}
    field = ctx.get("field") or ".".join(str(part) for part in error["loc"]) or "<config>"
    value = ctx.get("value", error.get("input"))
    return ConfigError(field, value, error["msg"])


def validate_config(raw: Union[Mapping[str, Any], ExperimentConfig]) -> ExperimentConfig:
    """
    Validate a config and fill derived defaults.

    Raises:
        ConfigError: naming the offending field, its value and the constraint.
    """
    data = raw.model_dump() if isinstance(raw, ExperimentConfig) else dict(raw)
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise _config_error(exc) from exc
    return cfg.model_copy(update={"epochs_stage1": cfg.stage1_epochs, "epochs_stage2": cfg.stage2_epochs})


def load_preset(name: str) -> dict:
    """Hyperparameters of a named dataset preset from config/presets.yaml."""
    presets = yaml.safe_load(PRESETS_PATH.read_text())["experiments"]
    if name not in presets:
        raise ConfigError("preset", name, f"must be one of {sorted(presets)}")
    return dict(presets[name])


def load_config(
    path: Optional[Union[str, Path]] = None,
    preset: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """Resolve preset < JSON file < overrides into a validated config."""
    data: dict = load_preset(preset) if preset else {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError("config", str(path), "file does not exist")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", str(path), f"not valid JSON ({exc.msg})") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config", str(path), "must be a JSON object")
        data.update(loaded)
    data.update({key: value for key, value in (overrides or {}).items() if value is not None})
    cfg = validate_config(data)
    logger.debug("Resolved config: %s", cfg.model_dump_json())
    return cfg


ABLATION_UPDATES = {
    Ablation.NO_NCA: {"weight_nca": 0.0},
    Ablation.NO_DYNAMIC_CLUSTERING: {"mask_mode": MaskMode.STATIC},
    Ablation.NO_AA: {"weight_aa_neg": 0.0},
    Ablation.NO_PP: {"weight_pp_neg": 0.0},
    Ablation.NO_AP_NEG: {"weight_ap_neg": 0.0},
    Ablation.SUPERVISED_ONLY: {"supervised_only": True},
    Ablation.DENSE_POSITIVES: {"positive_mode": PositiveMode.DENSE},
    Ablation.DEEP_SEMANTIC: {"semantic_kind": SemanticKind.DEEP_MLP, "semantic_layers": 3},
}


def apply_ablations(cfg: ExperimentConfig, ablations: Iterable[Union[Ablation, str]]) -> ExperimentConfig:
    updates: dict = {}
    for ablation in ablations:
        updates.update(ABLATION_UPDATES[Ablation(ablation)])
    return validate_config(cfg.model_copy(update=updates)) if updates else cfg
