"""
Segmental evaluation: frame accuracy, edit score and F1 at IoU thresholds.

Segments are maximal runs of equal labels. Ignored classes drop out of the
frame accuracy and their segments drop out of the segmental metrics.
Dataset-level numbers are per-video averages.
"""

import logging
from typing import Iterable, List, Sequence

import numpy as np

from .dataio import upsample_predictions
from .models import MetricReport, Segment, SegmentList

logger = logging.getLogger(__name__)

OVERLAPS = {"f1_10": 0.10, "f1_25": 0.25, "f1_50": 0.50}


def segments_from_labels(labels: Sequence[int]) -> SegmentList:
    """Run-length encode a label sequence into maximal segments."""
    labels = np.asarray(labels)
    if labels.size < 1:
        raise ValueError("cannot segment an empty sequence")
    boundaries = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [labels.size]])
    return SegmentList(segments=[Segment(int(labels[s]), int(s), int(e)) for s, e in zip(starts, ends)])


def _kept_segments(labels: Sequence[int], ignore: Iterable[int]) -> List[Segment]:
    ignore = set(ignore)
    return [segment for segment in segments_from_labels(labels).segments if segment.label not in ignore]


def frame_accuracy(pred: Sequence[int], gt: Sequence[int], ignore: Iterable[int] = ()) -> float:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction length {pred.size} differs from ground truth length {gt.size}")
    keep = ~np.isin(gt, list(ignore))
    if not keep.any():
        return 100.0
    return 100.0 * float(np.mean(pred[keep] == gt[keep]))


def levenshtein(first: Sequence[int], second: Sequence[int]) -> int:
    distance = np.zeros((len(first) + 1, len(second) + 1), dtype=np.int64)
    distance[:, 0] = np.arange(len(first) + 1)
    distance[0, :] = np.arange(len(second) + 1)
    for i in range(1, len(first) + 1):
        for j in range(1, len(second) + 1):
            cost = 0 if first[i - 1] == second[j - 1] else 1
            distance[i, j] = min(distance[i - 1, j] + 1, distance[i, j - 1] + 1, distance[i - 1, j - 1] + cost)
    return int(distance[-1, -1])


def edit_score(pred: Sequence[int], gt: Sequence[int], ignore: Iterable[int] = ()) -> float:
    """100 * (1 - Levenshtein distance of the segment label strings / the longer string's length)."""
    ignore = list(ignore)
    pred_labels = [s.label for s in _kept_segments(pred, ignore)]
    gt_labels = [s.label for s in _kept_segments(gt, ignore)]
    longest = max(len(pred_labels), len(gt_labels))
    if longest == 0:
        return 100.0
    score = 100.0 * (1.0 - levenshtein(pred_labels, gt_labels) / longest)
    return float(min(100.0, max(0.0, score)))


def f1_at_overlap(pred: Sequence[int], gt: Sequence[int], threshold: float, ignore: Iterable[int] = ()) -> float:
    """
    Segmental F1. Predicted segments are matched greedily in order; each one
    consumes the unmatched same-label ground-truth segment of highest IoU when
    that IoU reaches the threshold.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    ignore = list(ignore)
    predicted = _kept_segments(pred, ignore)
    truth = _kept_segments(gt, ignore)
    if not predicted and not truth:
        return 100.0
    matched = np.zeros(len(truth), dtype=bool)
    true_positives = 0
    for segment in predicted:
        best, best_iou = -1, -1.0
        for j, target in enumerate(truth):
            if matched[j] or target.label != segment.label:
                continue
            intersection = min(segment.end, target.end) - max(segment.start, target.start)
            union = max(segment.end, target.end) - min(segment.start, target.start)
            iou = max(0, intersection) / union
            if iou > best_iou:
                best, best_iou = j, iou
        if best >= 0 and best_iou >= threshold:
            matched[best] = True
            true_positives += 1
    false_positives = len(predicted) - true_positives
    false_negatives = len(truth) - true_positives
    return 100.0 * 2 * true_positives / (2 * true_positives + false_positives + false_negatives)


def score(pred: Sequence[int], gt: Sequence[int], ignore: Iterable[int] = ()) -> MetricReport:
    """All metrics for predictions already at ground-truth resolution."""
    ignore = list(ignore)
    return MetricReport(
        acc=frame_accuracy(pred, gt, ignore),
        edit=edit_score(pred, gt, ignore),
        **{name: f1_at_overlap(pred, gt, overlap, ignore) for name, overlap in OVERLAPS.items()},
    )


def evaluate(pred_down: Sequence[int], gt_full: Sequence[int], ignore: Iterable[int] = ()) -> MetricReport:
    """Up-sample working-resolution predictions to the original length and score them."""
    gt_full = np.asarray(gt_full)
    return score(upsample_predictions(np.asarray(pred_down), len(gt_full)), gt_full, ignore)


def evaluate_dataset(
    predictions: Sequence[Sequence[int]],
    ground_truths: Sequence[Sequence[int]],
    ignore: Iterable[int] = (),
) -> MetricReport:
    """Per-video `evaluate`, averaged over videos."""
    ignore = list(ignore)
    reports = [evaluate(pred, gt, ignore) for pred, gt in zip(predictions, ground_truths, strict=True)]
    return MetricReport.mean(reports)
