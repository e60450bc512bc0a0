"""
The four trainable networks: temporal encoder T, semantic extractor S,
neighbourhood-consistency scorer G and linear classifier C.

All networks take batch-first tensors [N x T x channels].
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeMismatchError
from .models.common import SemanticKind


def _expect(tensor: torch.Tensor, ndim: int, last_dim: int, name: str) -> None:
    if tensor.ndim != ndim or tensor.shape[-1] != last_dim:
        raise ShapeMismatchError(
            f"{name} expects a {ndim}-d tensor with last dimension {last_dim}, got {tuple(tensor.shape)}"
        )


class TemporalEncoder(nn.Module):
    """
    Encoder-decoder temporal convolution network producing X = T(V).

    `depth` encoder stages (convolution, ReLU, halving average pool) are
    followed by `depth` decoder stages (nearest upsampling, convolution,
    ReLU). Every decoder stage is brought back to full length, the stages
    are concatenated and a 1x1 convolution projects them to the embedding
    dimension. Convolutions use replicate padding, so a sequence constant in
    time maps to a constant embedding. Lengths that are not a multiple of
    2**depth are padded at the end and cropped again.
    """

    def __init__(self, feature_dim: int, hidden: int, embedding_dim: int, depth: int = 3, kernel: int = 3):
        super().__init__()
        self.feature_dim = feature_dim
        self.depth = depth
        self.kernel = kernel

        def conv(in_channels: int) -> nn.Conv1d:
            return nn.Conv1d(in_channels, hidden, kernel, padding=kernel // 2, padding_mode="replicate")

        self.encoder = nn.ModuleList([conv(feature_dim if i == 0 else hidden) for i in range(depth)])
        self.decoder = nn.ModuleList([conv(hidden) for _ in range(depth)])
        self.pool = nn.AvgPool1d(2)
        self.projection = nn.Conv1d(hidden * depth, embedding_dim, 1)

    @property
    def receptive_field(self) -> int:
        """Upper bound on how far (in input frames) one frame can influence the output."""
        radius = self.kernel // 2
        encoder = sum(radius * 2**i + 2 ** (i + 1) for i in range(self.depth))
        decoder = sum(2 ** (self.depth - j + 1) + radius * 2 ** (self.depth - j) for j in range(1, self.depth + 1))
        return encoder + decoder + 2**self.depth

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        _expect(features, 3, self.feature_dim, "TemporalEncoder")
        length = features.shape[1]
        padded = math.ceil(length / 2**self.depth) * 2**self.depth
        x = features.transpose(1, 2)
        if padded != length:
            x = F.pad(x, (0, padded - length), mode="replicate")

        for conv in self.encoder:
            x = self.pool(F.relu(conv(x)))
        stages = []
        for conv in self.decoder:
            x = F.relu(conv(F.interpolate(x, scale_factor=2, mode="nearest")))
            stages.append(F.interpolate(x, size=padded, mode="nearest"))
        out = self.projection(torch.cat(stages, dim=1))
        return out[:, :, :length].transpose(1, 2)


class SemanticExtractor(nn.Module):
    """
    Semantic extractor H = S(V).

    The default is a two-layer per-frame MLP, so frame t of the output only
    depends on frame t of the input. `deep_mlp` stacks more hidden layers;
    `conv1d` replaces the first layer with a width-3 temporal convolution.
    """

    def __init__(
        self,
        feature_dim: int,
        hidden: int,
        embedding_dim: int,
        kind: SemanticKind = SemanticKind.MLP,
        layers: int = 1,
    ):
        super().__init__()
        self.feature_dim = feature_dim
        self.kind = SemanticKind(kind)
        if self.kind is SemanticKind.CONV1D:
            self.conv = nn.Conv1d(feature_dim, hidden, 3, padding=1, padding_mode="replicate")
            self.mlp = nn.Sequential(nn.ReLU(), nn.Linear(hidden, embedding_dim))
            return
        hidden_layers = layers if self.kind is SemanticKind.DEEP_MLP else 1
        blocks: list = [nn.Linear(feature_dim, hidden), nn.ReLU()]
        for _ in range(hidden_layers - 1):
            blocks += [nn.Linear(hidden, hidden), nn.ReLU()]
        blocks.append(nn.Linear(hidden, embedding_dim))
        self.mlp = nn.Sequential(*blocks)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        _expect(features, 3, self.feature_dim, "SemanticExtractor")
        if self.kind is SemanticKind.CONV1D:
            features = self.conv(features.transpose(1, 2)).transpose(1, 2)
        return self.mlp(features)


class NCAScorer(nn.Module):
    """MLP G scoring whether two pooled neighbourhoods share an action."""

    def __init__(self, embedding_dim: int, hidden: int):
        super().__init__()
        self.embedding_dim = embedding_dim
        self.hidden = nn.Sequential(nn.Linear(2 * embedding_dim, hidden), nn.ReLU())
        self.out = nn.Linear(hidden, 1)

    def logits(self, pooled_pair: torch.Tensor) -> torch.Tensor:
        if pooled_pair.shape[-1] != 2 * self.embedding_dim:
            raise ShapeMismatchError(
                f"NCAScorer expects pooled pairs of size {2 * self.embedding_dim}, got {tuple(pooled_pair.shape)}"
            )
        return self.out(self.hidden(pooled_pair)).squeeze(-1)

    def forward(self, pooled_pair: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(pooled_pair))


class LinearClassifier(nn.Module):
    """Frame-wise affine map C from embeddings to class logits."""

    def __init__(self, embedding_dim: int, num_classes: int):
        super().__init__()
        self.embedding_dim = embedding_dim
        self.linear = nn.Linear(embedding_dim, num_classes)

    def forward(self, embeddings: torch.Tensor) -> torch.Tensor:
        if embeddings.shape[-1] != self.embedding_dim:
            raise ShapeMismatchError(
                f"LinearClassifier expects last dimension {self.embedding_dim}, got {tuple(embeddings.shape)}"
            )
        return self.linear(embeddings)
