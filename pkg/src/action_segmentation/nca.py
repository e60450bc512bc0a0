"""
Neighbourhood-consistency-aware unit.

For K anchor frames of a labelled sequence, windows of W frames are cut
around the anchor, around M frames with the anchor's label and around M
frames with a different label. The scorer G sees the per-dimension max of
two windows and is trained to tell same-label pairs from different-label
pairs, which discourages fragmented predictions.

Windows are half-open: the window of centre t covers [t - W/2, t + W/2).
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .networks import NCAScorer

logger = logging.getLogger(__name__)

MAX_ANCHOR_ATTEMPTS = 10


@dataclass(frozen=True)
class NeighbourhoodSample:
    anchors: torch.Tensor  # [K x W x D]
    positives: torch.Tensor  # [K x M x W x D]
    negatives: torch.Tensor  # [K x M x W x D]
    anchor_centers: np.ndarray  # [K]
    positive_centers: np.ndarray  # [K x M]
    negative_centers: np.ndarray  # [K x M]

    @property
    def is_empty(self) -> bool:
        return self.anchors.shape[0] == 0

    @classmethod
    def empty(cls, X: torch.Tensor, window: int, partners: int) -> "NeighbourhoodSample":
        dim = X.shape[-1]
        return cls(
            anchors=X.new_zeros((0, window, dim)),
            positives=X.new_zeros((0, partners, window, dim)),
            negatives=X.new_zeros((0, partners, window, dim)),
            anchor_centers=np.zeros(0, dtype=np.int64),
            positive_centers=np.zeros((0, partners), dtype=np.int64),
            negative_centers=np.zeros((0, partners), dtype=np.int64),
        )


def _windows(X: torch.Tensor, centers: np.ndarray, window: int) -> torch.Tensor:
    offsets = np.arange(-window // 2, window // 2)
    index = torch.as_tensor(np.asarray(centers)[..., None] + offsets, device=X.device)
    return X[index]


def _draw(pool: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(pool, size=count, replace=len(pool) < count)


def sample_neighbourhoods(
    X: torch.Tensor,
    labels: Sequence[int],
    window: int,
    anchors: int,
    partners: int,
    rng: np.random.Generator,
) -> NeighbourhoodSample:
    """
    Sample K anchor neighbourhoods with M same-label and M different-label partners each.

    Centres are restricted to [W/2, T - W/2] so every window fits. An anchor
    without candidates of either kind is redrawn up to 10 times; if that
    fails the sequence contributes an empty sample. Negative labels mark
    frames without a usable label and are never chosen.
    """
    labels = np.asarray(labels)
    length = X.shape[0]
    if length < window:
        raise ValueError(f"sequence of length {length} is shorter than the window {window}")
    half = window // 2
    centers = np.arange(half, length - half + 1)
    centers = centers[labels[centers] >= 0]
    if len(centers) == 0:
        return NeighbourhoodSample.empty(X, window, partners)

    anchor_centers, positive_centers, negative_centers = [], [], []
    for _ in range(anchors):
        for _ in range(MAX_ANCHOR_ATTEMPTS):
            t = int(rng.choice(centers))
            same = centers[(labels[centers] == labels[t]) & (centers != t)]
            different = centers[labels[centers] != labels[t]]
            if len(same) and len(different):
                break
        else:
            logger.debug("No anchor with both partner kinds after %d attempts", MAX_ANCHOR_ATTEMPTS)
            return NeighbourhoodSample.empty(X, window, partners)
        anchor_centers.append(t)
        positive_centers.append(_draw(same, partners, rng))
        negative_centers.append(_draw(different, partners, rng))

    anchor_centers = np.asarray(anchor_centers, dtype=np.int64)
    positive_centers = np.stack(positive_centers).astype(np.int64)
    negative_centers = np.stack(negative_centers).astype(np.int64)
    return NeighbourhoodSample(
        anchors=_windows(X, anchor_centers, window),
        positives=_windows(X, positive_centers, window),
        negatives=_windows(X, negative_centers, window),
        anchor_centers=anchor_centers,
        positive_centers=positive_centers,
        negative_centers=negative_centers,
    )


def _pair_logits(scorer: NCAScorer, first: torch.Tensor, second: torch.Tensor) -> torch.Tensor:
    pooled_first = first.amax(dim=-2)
    pooled_second = second.amax(dim=-2)
    pooled_first = pooled_first.expand_as(pooled_second)
    return scorer.logits(torch.cat([pooled_first, pooled_second], dim=-1))


def consistency_score(scorer: NCAScorer, n1: torch.Tensor, n2: torch.Tensor) -> torch.Tensor:
    """Probability that two windows [.. x W x D] share an action, from their max-pooled features."""
    if n1.shape != n2.shape:
        raise ValueError(f"windows differ in shape: {tuple(n1.shape)} vs {tuple(n2.shape)}")
    return torch.sigmoid(_pair_logits(scorer, n1, n2))


def nca_loss(scorer: NCAScorer, sample: NeighbourhoodSample) -> torch.Tensor:
    """
    -(1 / (K M)) sum_ij [log G(N_t^i, N_t*^j) + log(1 - G(N_t^i, N_t'^j))];
    zero for an empty sample.
    """
    if sample.is_empty:
        return sample.anchors.new_zeros(())
    anchors = sample.anchors[:, None]  # broadcast over the M partners
    positive_logits = _pair_logits(scorer, anchors, sample.positives)
    negative_logits = _pair_logits(scorer, anchors, sample.negatives)
    pairs = positive_logits.numel()
    return (F.softplus(-positive_logits).sum() + F.softplus(negative_logits).sum()) / pairs
