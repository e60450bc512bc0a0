"""
Common enums shared across the action segmentation package.

These enums name the training phases, the ablation switches exposed by the
CLI, and the architectural and loss variants selectable from the config.
"""

from enum import Enum


class Phase(str, Enum):
    """Training phases recorded in the run log."""
    PRETRAIN = "pretrain"
    STAGE1 = "stage1"
    STAGE2 = "stage2"
    PROBE = "probe"


class Precision(str, Enum):
    """Floating point precision of networks and losses."""
    FLOAT32 = "float32"
    FLOAT64 = "float64"


class MaskMode(str, Enum):
    """How negative pairs are mined during unsupervised contrast."""
    DYNAMIC = "dynamic"  # intersect disagreements of input, temporal and semantic clusterings
    STATIC = "static"  # input-feature clustering only


class PositiveMode(str, Enum):
    """Which pairs the positive term aligns."""
    DIAGONAL = "diagonal"  # same frame, semantic vs temporal embedding
    DENSE = "dense"  # every pair sharing an input-feature cluster


class SemanticKind(str, Enum):
    """Semantic extractor variants."""
    MLP = "mlp"
    DEEP_MLP = "deep_mlp"
    CONV1D = "conv1d"


class Ablation(str, Enum):
    """Ablation switches, each mapping onto a loss weight, a mode or a network variant."""
    NO_NCA = "no-nca"
    NO_DYNAMIC_CLUSTERING = "no-dynamic-clustering"
    NO_AA = "no-aa"
    NO_PP = "no-pp"
    NO_AP_NEG = "no-ap-neg"
    SUPERVISED_ONLY = "supervised-only"
    DENSE_POSITIVES = "dense-positives"
    DEEP_SEMANTIC = "deep-semantic"
