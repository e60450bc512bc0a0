"""
Pydantic models for the action segmentation pipeline.

This package holds the value objects passed between modules: the experiment
configuration, feature sequences and dataset splits, pair masks, segments,
pseudo-labels, the synthetic dataset parameters, and the reports written by
training and evaluation.
"""

from .common import Ablation, MaskMode, Phase, PositiveMode, Precision, SemanticKind
from .config import ExperimentConfig, apply_ablations, load_config, load_preset, validate_config
from .masks import ClusterAssignment, PairMask
from .pseudo_labels import PseudoLabelStore
from .report import LOG_COLUMNS, METRIC_NAMES, MetricReport, RunManifest, TrainingPhaseReport
from .segments import Segment, SegmentList
from .sequence import DatasetSplit, DownsampledSequence, FeatureSequence, HiddenLabels, labels_revealed
from .synth import SynthSpec, load_synth_spec

__all__ = [
    # Enums
    "Ablation",
    "MaskMode",
    "Phase",
    "PositiveMode",
    "Precision",
    "SemanticKind",
    # Configuration
    "ExperimentConfig",
    "apply_ablations",
    "load_config",
    "load_preset",
    "validate_config",
    # Sequences
    "DatasetSplit",
    "DownsampledSequence",
    "FeatureSequence",
    "HiddenLabels",
    "labels_revealed",
    # Masks, segments and pseudo-labels
    "ClusterAssignment",
    "PairMask",
    "PseudoLabelStore",
    "Segment",
    "SegmentList",
    # Synthetic data
    "SynthSpec",
    "load_synth_spec",
    # Reports
    "LOG_COLUMNS",
    "METRIC_NAMES",
    "MetricReport",
    "RunManifest",
    "TrainingPhaseReport",
]
