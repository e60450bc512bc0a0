"""
Static SVG figures: per-video timelines and training curves.

Colours are fixed by class id (tab20, cycling), so the same action has the
same colour in every figure. SVGs are written without a date and with a
fixed id salt, which keeps repeated renders byte-identical.
"""

import csv
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402
from matplotlib.patches import Patch, Rectangle  # noqa: E402

from .errors import MissingFileError  # noqa: E402
from .evaluation import segments_from_labels  # noqa: E402
from .models.report import LOG_COLUMNS, LOSS_NAMES, METRIC_NAMES  # noqa: E402

logger = logging.getLogger(__name__)

SVG_PARAMS = {"svg.hashsalt": "action_segmentation", "svg.fonttype": "none"}


def class_color(class_id: int) -> tuple:
    return matplotlib.colormaps["tab20"](class_id % 20)


def timeline_figure(
    gt: Sequence[int],
    pred: Sequence[int],
    class_names: Optional[Sequence[str]] = None,
    title: str = "",
) -> Figure:
    """Two colour-band rows, ground truth above prediction, one rectangle per segment."""
    figure, ax = plt.subplots(figsize=(10, 1.8))
    rows = {"GT": (gt, 1.0), "Pred": (pred, 0.0)}
    seen = set()
    for labels, y in rows.values():
        for segment in segments_from_labels(labels).segments:
            width = segment.end - segment.start
            ax.add_patch(Rectangle((segment.start, y + 0.1), width, 0.8, color=class_color(segment.label)))
            seen.add(segment.label)
    ax.set_xlim(0, max(len(gt), len(pred)))
    ax.set_ylim(0, 2)
    ax.set_yticks([1.5, 0.5], list(rows))
    ax.set_xlabel("frame")
    if title:
        ax.set_title(title)
    if class_names is not None:
        handles = [Patch(color=class_color(c), label=class_names[c]) for c in sorted(seen)]
        ax.legend(handles=handles, loc="upper left", bbox_to_anchor=(1.0, 1.0), fontsize="small", frameon=False)
    figure.tight_layout()
    return figure


def read_log(path: Union[str, Path]) -> List[Dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"missing training log {path}")
    with path.open(newline="") as handle:
        return list(csv.DictReader(handle))


def curves_figure(rows: List[Dict[str, str]]) -> Figure:
    """Loss components and evaluation metrics against the logged epoch index."""
    figure, (loss_ax, metric_ax) = plt.subplots(1, 2, figsize=(11, 4))
    x = list(range(1, len(rows) + 1))
    for name in LOSS_NAMES:
        loss_ax.plot(x, [float(row[name] or 0.0) for row in rows], label=name)
    for name in METRIC_NAMES:
        metric_ax.plot(x, [float(row[name]) if row[name] else float("nan") for row in rows], label=name)
    boundaries = [i + 0.5 for i in range(1, len(rows)) if rows[i]["phase"] != rows[i - 1]["phase"]]
    for ax, ylabel in ((loss_ax, "loss"), (metric_ax, "%")):
        for boundary in boundaries:
            ax.axvline(boundary, color="0.7", linestyle=":", linewidth=0.8)
        ax.set_xlabel("logged epoch")
        ax.set_ylabel(ylabel)
        ax.legend(fontsize="small")
    figure.tight_layout()
    return figure


def save_svg(figure: Figure, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(SVG_PARAMS):
        figure.savefig(path, format="svg", metadata={"Date": None})
    plt.close(figure)
    logger.debug("Wrote %s", path)
    return path


def plot_timelines(
    ground_truths: Dict[str, Sequence[int]],
    predictions: Dict[str, Sequence[int]],
    out_dir: Union[str, Path],
    class_names: Optional[Sequence[str]] = None,
) -> List[Path]:
    """One timeline SVG per video present in both mappings."""
    out_dir = Path(out_dir)
    paths = []
    for video_id in sorted(set(ground_truths) & set(predictions)):
        figure = timeline_figure(ground_truths[video_id], predictions[video_id], class_names, video_id)
        paths.append(save_svg(figure, out_dir / f"timeline_{video_id}.svg"))
    if not paths:
        raise MissingFileError("no video has both predictions and ground truth")
    return paths


def plot_curves(log_path: Union[str, Path], out_path: Union[str, Path]) -> Path:
    rows = read_log(log_path)
    missing = [column for column in LOG_COLUMNS if rows and column not in rows[0]]
    if not rows or missing:
        raise MissingFileError(f"{log_path} holds no training epochs")
    return save_svg(curves_figure(rows), out_path)
