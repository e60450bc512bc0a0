"""
Semantic-guided multi-level contrast.

Frames sampled from every video of a batch give three aligned views: input
features v_s, temporal embeddings x_s and semantic embeddings h_s. The
positive term pulls h_s[i] towards x_s[i]; three negative terms push apart
frame pairs selected by a binary pair mask, across (h, x), within h and
within x. Similarities are raw dot products over the frame-pair Gram
matrix, scaled by 1/xi, and -log(sigmoid(z)) is evaluated as softplus(-z).
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Union

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from threadpoolctl import threadpool_limits

from .core import child_seed
from .errors import ClusteringError
from .models import ClusterAssignment, ExperimentConfig, PairMask

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, torch.Tensor, Sequence[int]]

CENTROID_SHIFT_TOL = 1e-6


@dataclass(frozen=True)
class SampledBatch:
    """Frames of N videos concatenated along time; row i of every view is the same frame."""
    v_s: torch.Tensor
    x_s: torch.Tensor
    h_s: torch.Tensor
    provenance: np.ndarray  # [rows x 2] of (video index, frame index)
    labels: Optional[np.ndarray] = None

    @property
    def rows(self) -> int:
        return self.x_s.shape[0]


@dataclass(frozen=True)
class SMCWeights:
    ap_pos: float = 1.0
    ap_neg: float = 1.0
    aa_neg: float = 1.0
    pp_neg: float = 1.0

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "SMCWeights":
        return cls(cfg.weight_ap_pos, cfg.weight_ap_neg, cfg.weight_aa_neg, cfg.weight_pp_neg)


@dataclass(frozen=True)
class SMCLoss:
    total: torch.Tensor
    components: Dict[str, torch.Tensor]


def sample_frames(
    X: torch.Tensor,
    H: torch.Tensor,
    V: torch.Tensor,
    frames: int,
    rng: np.random.Generator,
    labels: Optional[np.ndarray] = None,
) -> SampledBatch:
    """
    Draw `frames` indices per video uniformly without replacement, sort them,
    slice V, X and H with the same indices and concatenate the videos.
    """
    num_videos, length = X.shape[:2]
    if frames > length:
        raise ValueError(f"cannot sample {frames} frames from sequences of length {length}")
    index = np.stack([np.sort(rng.choice(length, size=frames, replace=False)) for _ in range(num_videos)])
    rows = torch.arange(num_videos, device=X.device)[:, None]
    cols = torch.as_tensor(index, device=X.device)

    def gather(tensor: torch.Tensor) -> torch.Tensor:
        return tensor[rows, cols].reshape(num_videos * frames, tensor.shape[-1])

    provenance = np.stack([np.repeat(np.arange(num_videos), frames), index.ravel()], axis=1)
    sampled_labels = None
    if labels is not None:
        sampled_labels = np.asarray(labels)[np.arange(num_videos)[:, None], index].ravel()
    return SampledBatch(gather(V), gather(X), gather(H), provenance, sampled_labels)


def kmeans(points: Union[np.ndarray, torch.Tensor], k: int, rng: np.random.Generator) -> ClusterAssignment:
    """
    Lloyd's k-means with k-means++ seeding drawn from `rng`. Stops after 100
    iterations or once the summed squared centroid shift drops to 1e-6;
    empty clusters are relocated to far-away points.
    """
    if isinstance(points, torch.Tensor):
        points = points.detach().cpu().numpy()
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if k < 1 or len(points) < k:
        raise ClusteringError(f"cannot form {k} clusters from {len(points)} points")
    # sklearn multiplies tol by the mean feature variance
    spread = float(np.var(points, axis=0).mean())
    tol = CENTROID_SHIFT_TOL / spread if spread > 0 else CENTROID_SHIFT_TOL
    # one OpenMP thread keeps the centroid reductions in a fixed order
    with warnings.catch_warnings(), threadpool_limits(limits=1, user_api="openmp"):
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = KMeans(
            n_clusters=k,
            init="k-means++",
            n_init=1,
            max_iter=100,
            tol=tol,
            algorithm="lloyd",
            random_state=child_seed(rng),
        ).fit(points)
    return ClusterAssignment(
        labels=model.labels_.astype(np.int64), centroids=model.cluster_centers_, inertia=float(model.inertia_)
    )


def label_mask(labels: ArrayLike) -> torch.Tensor:
    """out[i, j] = 1 iff labels[i] == labels[j]."""
    labels = torch.as_tensor(np.asarray(labels))
    return (labels[:, None] == labels[None, :]).long()


def mask_from_assignments(*assignments: ArrayLike) -> torch.Tensor:
    """prod over views of (1 - M_view): 1 where every clustering puts the pair apart."""
    m = None
    for labels in assignments:
        apart = 1 - label_mask(labels)
        m = apart if m is None else m * apart
    if m is None:
        raise ValueError("need at least one cluster assignment")
    return m


def dynamic_mask(batch: SampledBatch, k: int, rng: np.random.Generator) -> PairMask:
    """Negative pairs are the pairs on which the input, temporal and semantic clusterings all disagree."""
    views = tuple(kmeans(view, k, rng) for view in (batch.v_s, batch.x_s, batch.h_s))
    return PairMask(m=mask_from_assignments(*(view.labels for view in views)), views=views)


def static_mask(batch: SampledBatch, k: int, rng: np.random.Generator) -> PairMask:
    """Negative pairs from the input-feature clustering alone."""
    view = kmeans(batch.v_s, k, rng)
    return PairMask(m=1 - label_mask(view.labels), views=(view,))


def supervised_mask(labels: ArrayLike) -> PairMask:
    """
    Label-disagreement negatives. Negative labels mark frames without a
    usable label; they never form pairs.
    """
    labels = torch.as_tensor(np.asarray(labels))
    known = labels >= 0
    m = (labels[:, None] != labels[None, :]) & known[:, None] & known[None, :]
    return PairMask(m=m.long())


def positive_loss(h_s: torch.Tensor, x_s: torch.Tensor, scale: float) -> torch.Tensor:
    """Mean of -log sigmoid(<h_s[i], x_s[i]> / xi) over rows; only the Gram diagonal is formed."""
    return F.softplus(-(h_s * x_s).sum(dim=-1) / scale).mean()


def dense_positive_loss(h_s: torch.Tensor, x_s: torch.Tensor, positives: torch.Tensor, scale: float) -> torch.Tensor:
    """Positive term over every pair sharing an input cluster instead of the diagonal."""
    positives = positives.to(h_s.dtype)
    return (F.softplus(-(h_s @ x_s.T) / scale) * positives).sum() / positives.sum()


def negative_loss(a: torch.Tensor, b: torch.Tensor, mask: Union[PairMask, torch.Tensor], scale: float) -> torch.Tensor:
    """
    (1 / N_ap) * sum_ij mask[i, j] * -log sigmoid(-<a[i], b[j]> / xi),
    with N_ap the number of selected pairs; exactly 0 when no pair is selected.
    """
    m = (mask.m if isinstance(mask, PairMask) else mask).to(device=a.device, dtype=a.dtype)
    count = m.sum()
    if count == 0:
        return a.new_zeros(())
    return (F.softplus(a @ b.T / scale) * m).sum() / count


def smc_loss(
    batch: SampledBatch,
    mask: PairMask,
    scale: float,
    weights: SMCWeights = SMCWeights(),
    normalize: bool = False,
    positive_pairs: Optional[torch.Tensor] = None,
) -> SMCLoss:
    """
    Weighted sum of the positive term and the three negative terms.

    `positive_pairs`, when given, replaces the diagonal positive selector
    with a dense pair mask.
    """
    h_s, x_s = batch.h_s, batch.x_s
    if normalize:
        h_s, x_s = F.normalize(h_s, dim=-1), F.normalize(x_s, dim=-1)
    if positive_pairs is None:
        l_ap_p = positive_loss(h_s, x_s, scale)
    else:
        l_ap_p = dense_positive_loss(h_s, x_s, positive_pairs, scale)
    components = {
        "l_ap_p": l_ap_p,
        "l_ap_n": negative_loss(h_s, x_s, mask, scale),
        "l_aa_n": negative_loss(h_s, h_s, mask, scale),
        "l_pp_n": negative_loss(x_s, x_s, mask, scale),
    }
    total = (
        weights.ap_pos * components["l_ap_p"]
        + weights.ap_neg * components["l_ap_n"]
        + weights.aa_neg * components["l_aa_n"]
        + weights.pp_neg * components["l_pp_n"]
    )
    return SMCLoss(total, components)


def info_nce(
    X: torch.Tensor,
    anchor: int,
    positives: Iterable[int],
    negatives: Iterable[int],
    temperature: float,
) -> torch.Tensor:
    """InfoNCE with cosine similarity, averaged over the positives of one anchor."""
    positives, negatives = list(positives), list(negatives)
    if not positives:
        raise ValueError("info_nce needs at least one positive")
    if set(positives) & set(negatives) or anchor in positives or anchor in negatives:
        raise ValueError("anchor, positives and negatives must be disjoint")
    sims = F.cosine_similarity(X[anchor].unsqueeze(0), X, dim=-1) / temperature
    pos = sims[positives]
    neg = sims[negatives]
    logits = torch.cat([pos[:, None], neg.expand(len(positives), -1)], dim=1)
    return (torch.logsumexp(logits, dim=1) - pos).mean()


def triplet_loss(a: torch.Tensor, p: torch.Tensor, n: torch.Tensor) -> torch.Tensor:
    """-log sigmoid(<a, p>) - log sigmoid(-<a, n>), the primitive the contrast terms instantiate."""
    if not (a.shape == p.shape == n.shape):
        raise ValueError("anchor, positive and negative must have equal shapes")
    return F.softplus(-(a * p).sum(-1)) + F.softplus((a * n).sum(-1))
