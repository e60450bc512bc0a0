"""
The training schedule: unsupervised pretraining of the temporal and
semantic networks with linear-probe model selection, then iterations of
supervised classification and contrast over ground truth plus pseudo-labels.

Every phase epoch yields one `TrainingPhaseReport`. A `RunLog` bound to a
run directory appends the reports to log.csv, the per-step contrast
components to steps.csv, and writes checkpoints next to them.
"""

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from .contrast import SMCWeights, dynamic_mask, label_mask, sample_frames, smc_loss, static_mask, supervised_mask
from .core import ensure_finite
from .dataio import downsample, upsample_predictions
from .errors import ShapeMismatchError, TrainingError
from .evaluation import evaluate_dataset, frame_accuracy
from .models import (
    LOG_COLUMNS,
    DatasetSplit,
    ExperimentConfig,
    FeatureSequence,
    MaskMode,
    MetricReport,
    Phase,
    PositiveMode,
    PseudoLabelStore,
    TrainingPhaseReport,
    labels_revealed,
    validate_config,
)
from .nca import nca_loss, sample_neighbourhoods
from .networks import LinearClassifier
from .state import ModelState

logger = logging.getLogger(__name__)

STEP_COLUMNS = ["phase", "iter", "step", "loss_total", "l_ap_p", "l_ap_n", "l_aa_n", "l_pp_n", "l_nca", "l_ce"]


@dataclass(frozen=True)
class PreparedVideo:
    """A video at working resolution, as a tensor of the run's precision."""
    video_id: str
    features: torch.Tensor  # [T x F]
    labels: Optional[np.ndarray]  # [T], only for videos with visible labels
    t_original: int


@dataclass(frozen=True)
class PreparedSplit:
    labelled: List[PreparedVideo]
    unlabelled: List[PreparedVideo]
    evaluation: List[PreparedVideo]
    evaluation_sequences: List[FeatureSequence]
    ignore_classes: Tuple[int, ...] = ()

    @property
    def training(self) -> List[PreparedVideo]:
        return self.labelled + self.unlabelled


@dataclass(frozen=True)
class ProbeResult:
    train_accuracy: float
    metrics: MetricReport
    probe: LinearClassifier = field(compare=False)


class RunResult(NamedTuple):
    state: ModelState
    reports: List[TrainingPhaseReport]
    metrics: MetricReport


class RunLog:
    """Collects phase reports and, when bound to a directory, writes the run's CSV logs and checkpoints."""

    def __init__(self, run_dir: Optional[Union[str, Path]] = None):
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.reports: List[TrainingPhaseReport] = []
        self.checkpoints: List[Path] = []
        self.step = 0
        if self.run_dir is not None:
            self.run_dir.mkdir(parents=True, exist_ok=True)

    def _append(self, name: str, columns: Sequence[str], row: Dict[str, object]) -> None:
        if self.run_dir is None:
            return
        path = self.run_dir / name
        is_new = not path.exists()
        with path.open("a", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=list(columns), lineterminator="\n")
            if is_new:
                writer.writeheader()
            writer.writerow(row)

    def emit(self, report: TrainingPhaseReport) -> None:
        self.reports.append(report)
        acc = f"{report.metrics.acc:.2f}" if report.metrics else "-"
        logger.info(
            "%s iter %d epoch %d: loss %.4f, acc %s",
            report.phase.value, report.iteration, report.epoch, report.losses.get("l_total", 0.0), acc,
        )
        self._append("log.csv", LOG_COLUMNS, report.csv_row())

    def record_step(self, phase: Phase, iteration: int, components: Dict[str, float]) -> None:
        """One steps.csv row; the step counter runs across phases. Terms a phase lacks are written as 0."""
        self.step += 1
        row: Dict[str, object] = {"phase": phase.value, "iter": iteration, "step": self.step}
        row["loss_total"] = f"{components['l_total']:.6f}"
        row.update({name: f"{components.get(name, 0.0):.6f}" for name in STEP_COLUMNS[4:]})
        self._append("steps.csv", STEP_COLUMNS, row)

    def checkpoint(self, state: ModelState, phase: Phase, iteration: int) -> Optional[Path]:
        if self.run_dir is None:
            return None
        path = state.save(self.run_dir / f"ckpt_{phase.value}_{iteration}.bin")
        self.checkpoints.append(path)
        return path


class _EpochMeter:
    """Running mean of the loss components of one epoch."""

    def __init__(self):
        self.totals: Dict[str, float] = {}
        self.steps = 0

    def add(self, components: Dict[str, float]) -> None:
        self.steps += 1
        for name, value in components.items():
            self.totals[name] = self.totals.get(name, 0.0) + value

    def means(self) -> Dict[str, float]:
        return {name: total / max(1, self.steps) for name, total in self.totals.items()}


def _prepare_video(seq: FeatureSequence, cfg: ExperimentConfig, dtype: torch.dtype) -> PreparedVideo:
    if seq.feature_dim != cfg.feature_dim:
        raise ShapeMismatchError(
            f"{seq.video_id} has feature dimension {seq.feature_dim}, config expects {cfg.feature_dim}"
        )
    reduced = downsample(seq, cfg.downsample_length)
    features = torch.from_numpy(np.array(reduced.features)).to(dtype)
    labels = None if reduced.labels is None else np.array(reduced.labels)
    return PreparedVideo(seq.video_id, features, labels, reduced.t_original)


def prepare_split(split: DatasetSplit, cfg: ExperimentConfig, dtype: torch.dtype = torch.float32) -> PreparedSplit:
    """Down-sample every video of a split once. Hidden labels stay hidden."""
    labelled = [_prepare_video(seq, cfg, dtype) for seq in split.labelled]
    unlabelled = [_prepare_video(seq, cfg, dtype) for seq in split.unlabelled]
    if split.test:
        evaluation = [_prepare_video(seq, cfg, dtype) for seq in split.test]
    else:
        evaluation = labelled + unlabelled
    return PreparedSplit(labelled, unlabelled, evaluation, list(split.evaluation), tuple(cfg.ignore_classes))


def _batches(videos: List[PreparedVideo], size: int, rng: np.random.Generator) -> Iterator[List[PreparedVideo]]:
    order = rng.permutation(len(videos))
    for start in range(0, len(videos), size):
        yield [videos[i] for i in order[start:start + size]]


def _stack(batch: List[PreparedVideo]) -> torch.Tensor:
    return torch.stack([video.features for video in batch])


def _scalars(components: Dict[str, torch.Tensor]) -> Dict[str, float]:
    return {name: float(value.detach()) for name, value in components.items()}


def _elapsed(cfg: ExperimentConfig, started: float) -> float:
    return time.perf_counter() - started if cfg.log_wall_clock else 0.0


@torch.no_grad()
def embed(state: ModelState, videos: List[PreparedVideo]) -> List[torch.Tensor]:
    state.train()
    return [state.temporal(video.features[None])[0] for video in videos]


@torch.no_grad()
def predict(
    state: ModelState, videos: List[PreparedVideo], classifier: Optional[LinearClassifier] = None
) -> List[np.ndarray]:
    """Per-frame argmax at working resolution; ties go to the lower class id."""
    classifier = classifier or state.classifier
    return [classifier(x).argmax(dim=-1).cpu().numpy() for x in embed(state, videos)]


def predict_split(
    state: ModelState, split: DatasetSplit, classifier: Optional[LinearClassifier] = None
) -> Dict[str, np.ndarray]:
    """Predictions for the evaluation videos of a split, up-sampled to their original lengths."""
    videos = prepare_split(split, state.config, state.dtype).evaluation
    return {
        video.video_id: upsample_predictions(prediction, video.t_original)
        for video, prediction in zip(videos, predict(state, videos, classifier))
    }


def evaluate_predictions(predictions: List[np.ndarray], prepared: PreparedSplit) -> MetricReport:
    """The evaluation harness: the only place that reads labels of unlabelled videos."""
    with labels_revealed():
        ground_truths = [seq.ground_truth() for seq in prepared.evaluation_sequences]
    return evaluate_dataset(predictions, ground_truths, prepared.ignore_classes)


def evaluate_model(state: ModelState, prepared: PreparedSplit) -> MetricReport:
    return evaluate_predictions(predict(state, prepared.evaluation), prepared)


def _labelled_accuracy(predictions: List[np.ndarray], videos: List[PreparedVideo]) -> float:
    return frame_accuracy(np.concatenate(predictions), np.concatenate([video.labels for video in videos]))


def fit_linear_probe(
    embeddings: List[torch.Tensor],
    labels: List[np.ndarray],
    num_classes: int,
    cfg: ExperimentConfig,
) -> LinearClassifier:
    """
    Full-batch Adam on frozen embeddings, always from the same seeded
    initialisation so that probing never perturbs the run's random streams.
    """
    inputs = torch.cat(embeddings)
    targets = torch.as_tensor(np.concatenate(labels), dtype=torch.long)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.rng_seed)
        probe = LinearClassifier(inputs.shape[-1], num_classes).to(inputs.dtype)
    optimizer = torch.optim.Adam(probe.parameters(), lr=cfg.lr_classifier, weight_decay=cfg.wd_classifier)
    for _ in range(cfg.probe_epochs):
        optimizer.zero_grad()
        F.cross_entropy(probe(inputs), targets).backward()
        optimizer.step()
    probe.eval()
    return probe


def _probe(state: ModelState, prepared: PreparedSplit, cfg: ExperimentConfig) -> ProbeResult:
    if not prepared.labelled:
        raise TrainingError("the linear probe needs at least one labelled video")
    embeddings = embed(state, prepared.labelled)
    probe = fit_linear_probe(embeddings, [video.labels for video in prepared.labelled], state.num_classes, cfg)
    with torch.no_grad():
        train_predictions = [probe(x).argmax(dim=-1).numpy() for x in embeddings]
    metrics = evaluate_predictions(predict(state, prepared.evaluation, probe), prepared)
    return ProbeResult(_labelled_accuracy(train_predictions, prepared.labelled), metrics, probe)


def linear_probe(state: ModelState, split: DatasetSplit, cfg: Optional[ExperimentConfig] = None) -> ProbeResult:
    """Train a fresh linear classifier on frozen temporal embeddings of D_L and score it on the evaluation set."""
    cfg = validate_config(cfg or state.config)
    return _probe(state, prepare_split(split, cfg, state.dtype), cfg)


def _nca_term(state: ModelState, X: torch.Tensor, labels: np.ndarray, cfg: ExperimentConfig) -> torch.Tensor:
    """Mean NCA loss over the videos of a batch that yield a neighbourhood sample."""
    if cfg.weight_nca == 0:
        return X.new_zeros(())
    losses = []
    for embeddings, video_labels in zip(X, labels):
        sample = sample_neighbourhoods(
            embeddings, video_labels, cfg.nca_window, cfg.nca_anchors, cfg.nca_partners, state.rng
        )
        if not sample.is_empty:
            losses.append(nca_loss(state.scorer, sample))
    return torch.stack(losses).mean() if losses else X.new_zeros(())


def _pretrain_epoch(
    state: ModelState, videos: List[PreparedVideo], cfg: ExperimentConfig, run_log: RunLog
) -> Dict[str, float]:
    state.train("temporal", "semantic")
    optimizer = state.optimizers["pretrain"]
    weights = SMCWeights.from_config(cfg)
    clusters = cfg.check_clusters(state.num_classes)
    build_mask = dynamic_mask if cfg.mask_mode is MaskMode.DYNAMIC else static_mask
    meter = _EpochMeter()
    for batch in _batches(videos, cfg.batch_videos, state.rng):
        V = _stack(batch)
        sampled = sample_frames(state.temporal(V), state.semantic(V), V, cfg.frames_per_video, state.rng)
        mask = build_mask(sampled, clusters, state.rng)
        positives = label_mask(mask.views[0].labels) if cfg.positive_mode is PositiveMode.DENSE else None
        loss = smc_loss(sampled, mask, cfg.scale_factor, weights, cfg.normalize_embeddings, positives)
        optimizer.zero_grad()
        ensure_finite(loss.total, "pretraining loss").backward()
        optimizer.step()
        components = {"l_total": float(loss.total.detach()), **_scalars(loss.components)}
        run_log.record_step(Phase.PRETRAIN, 0, components)
        meter.add(components)
    return meter.means()


def pretrain_unsupervised(
    split: DatasetSplit,
    cfg: Optional[ExperimentConfig] = None,
    state: Optional[ModelState] = None,
    run_log: Optional[RunLog] = None,
) -> ModelState:
    """
    E1 epochs of semantic-guided contrast over every training video, labels
    unused. After each epoch a linear probe is fit on D_L; the temporal and
    semantic weights of the epoch with the best labelled-set probe accuracy
    are kept (earliest epoch on ties).
    """
    cfg = validate_config(cfg or state.config)
    state = state or ModelState.initialize(cfg, split.num_classes)
    run_log = run_log or RunLog()
    if cfg.epochs_pretrain == 0:
        return state
    cfg.check_clusters(state.num_classes)
    prepared = prepare_split(split, cfg, state.dtype)
    best_accuracy, best = -1.0, None
    for _ in range(cfg.epochs_pretrain):
        started = time.perf_counter()
        losses = _pretrain_epoch(state, prepared.training, cfg, run_log)
        state.epochs[Phase.PRETRAIN.value] += 1
        result = _probe(state, prepared, cfg) if prepared.labelled else None
        run_log.emit(
            TrainingPhaseReport(
                phase=Phase.PRETRAIN,
                iteration=0,
                epoch=state.epochs[Phase.PRETRAIN.value],
                losses=losses,
                metrics=result.metrics if result else None,
                seconds=_elapsed(cfg, started),
            )
        )
        if result is not None and result.train_accuracy > best_accuracy:
            best_accuracy, best = result.train_accuracy, state.snapshot()
    if best is not None:
        state.restore(best, ["temporal", "semantic"])
        logger.info("Pretraining kept the model with labelled-set probe accuracy %.2f", best_accuracy)
    return state


def _contrast_step(
    state: ModelState,
    batch: List[PreparedVideo],
    labels: np.ndarray,
    cfg: ExperimentConfig,
    with_classifier: bool,
) -> Tuple[torch.Tensor, Dict[str, float]]:
    """Supervised contrast on one batch: smc over label-disagreement pairs, NCA and optionally cross-entropy."""
    V = _stack(batch)
    X = state.temporal(V)
    sampled = sample_frames(X, state.semantic(V), V, cfg.frames_per_video, state.rng, labels)
    weights = SMCWeights.from_config(cfg)
    smc = smc_loss(sampled, supervised_mask(sampled.labels), cfg.scale_factor, weights, cfg.normalize_embeddings)
    l_nca = _nca_term(state, X, labels, cfg)
    total = smc.total + cfg.weight_nca * l_nca
    l_ce = X.new_zeros(())
    if with_classifier:
        logits = state.classifier(X)
        targets = torch.as_tensor(labels, dtype=torch.long)
        l_ce = F.cross_entropy(logits.reshape(-1, state.num_classes), targets.reshape(-1), ignore_index=-1)
        total = total + cfg.weight_ce * l_ce
    components = {
        "l_total": float(total.detach()),
        **_scalars(smc.components),
        "l_nca": float(l_nca.detach()),
        "l_ce": float(l_ce.detach()),
    }
    return total, components


def _train_epoch(
    state: ModelState,
    videos: List[PreparedVideo],
    labels: Dict[str, np.ndarray],
    cfg: ExperimentConfig,
    phase: Phase,
    iteration: int,
    run_log: RunLog,
) -> Dict[str, float]:
    with_classifier = phase is Phase.STAGE1
    optimizer = state.optimizers["stage"]
    meter = _EpochMeter()
    for batch in _batches(videos, cfg.batch_videos, state.rng):
        batch_labels = np.stack([labels[video.video_id] for video in batch])
        total, components = _contrast_step(state, batch, batch_labels, cfg, with_classifier)
        optimizer.zero_grad()
        ensure_finite(total, "training loss").backward()
        optimizer.step()
        run_log.record_step(phase, iteration, components)
        meter.add(components)
    return meter.means()


def _run_phase(
    state: ModelState,
    prepared: PreparedSplit,
    videos: List[PreparedVideo],
    labels: Dict[str, np.ndarray],
    cfg: ExperimentConfig,
    phase: Phase,
    iteration: int,
    epochs: int,
    run_log: RunLog,
) -> ModelState:
    with_classifier = phase is Phase.STAGE1
    for _ in range(epochs):
        started = time.perf_counter()
        if with_classifier:
            state.train("temporal", "semantic", "scorer", "classifier")
        else:
            state.train("temporal", "semantic", "scorer")
        losses = _train_epoch(state, videos, labels, cfg, phase, iteration, run_log)
        state.epochs[phase.value] += 1
        run_log.emit(
            TrainingPhaseReport(
                phase=phase,
                iteration=iteration,
                epoch=state.epochs[phase.value],
                losses=losses,
                metrics=evaluate_model(state, prepared),
                seconds=_elapsed(cfg, started),
            )
        )
    return state


def stage1_supervised(
    state: ModelState,
    split: DatasetSplit,
    cfg: Optional[ExperimentConfig] = None,
    iteration: int = 1,
    run_log: Optional[RunLog] = None,
) -> ModelState:
    """E2 epochs on D_L of contrast + NCA + cross-entropy, updating T, S, G and C."""
    cfg = validate_config(cfg or state.config)
    if not split.labelled:
        raise TrainingError("stage 1 needs at least one labelled video")
    prepared = prepare_split(split, cfg, state.dtype)
    labels = {video.video_id: video.labels for video in prepared.labelled}
    return _run_phase(
        state, prepared, prepared.labelled, labels, cfg, Phase.STAGE1, iteration, cfg.stage1_epochs, run_log or RunLog()
    )


def pseudo_labels_from_logits(logits: torch.Tensor) -> Tuple[np.ndarray, np.ndarray]:
    """Argmax labels, ties going to the lower class id, and max-softmax confidences of [T x A] logits."""
    labels = logits.argmax(dim=-1)
    confidences = torch.softmax(logits, dim=-1).amax(dim=-1)
    return labels.cpu().numpy().astype(np.int64), confidences.cpu().numpy().astype(np.float64)


def refresh_pseudo_labels(state: ModelState, split: DatasetSplit) -> PseudoLabelStore:
    """Classifier argmax and max-softmax confidence for every unlabelled video."""
    prepared = [_prepare_video(seq, state.config, state.dtype) for seq in split.unlabelled]
    labels, confidences = {}, {}
    with torch.no_grad():
        for video, embeddings in zip(prepared, embed(state, prepared)):
            video_labels, video_confidences = pseudo_labels_from_logits(state.classifier(embeddings))
            labels[video.video_id], confidences[video.video_id] = video_labels, video_confidences
    logger.debug("Refreshed pseudo-labels for %d unlabelled videos", len(labels))
    return PseudoLabelStore(labels=labels, confidences=confidences, num_classes=state.num_classes)


def stage2_contrast(
    state: ModelState,
    split: DatasetSplit,
    pl: PseudoLabelStore,
    cfg: Optional[ExperimentConfig] = None,
    iteration: int = 1,
    run_log: Optional[RunLog] = None,
) -> ModelState:
    """E3 epochs over all training videos of contrast + NCA on GT where visible and PL elsewhere. C stays fixed."""
    cfg = validate_config(cfg or state.config)
    missing = [seq.video_id for seq in split.unlabelled if seq.video_id not in pl]
    if missing:
        raise TrainingError(f"no pseudo-labels for unlabelled videos {missing}")
    prepared = prepare_split(split, cfg, state.dtype)
    labels = {video.video_id: video.labels for video in prepared.labelled}
    for video in prepared.unlabelled:
        labels[video.video_id] = pl.labels_for(video.video_id, cfg.pseudo_label_threshold)
    return _run_phase(
        state, prepared, prepared.training, labels, cfg, Phase.STAGE2, iteration, cfg.stage2_epochs, run_log or RunLog()
    )


def run_semi_supervised(
    split: DatasetSplit,
    cfg: ExperimentConfig,
    run_dir: Optional[Union[str, Path]] = None,
) -> RunResult:
    """
    Pretraining followed by I iterations of (stage 1, pseudo-label refresh,
    stage 2). The state kept at the end is the one whose classifier scores
    best on the labelled videos, later iterations winning ties; it is
    evaluated at original resolution.
    """
    cfg = validate_config(cfg)
    run_log = RunLog(run_dir)
    state = ModelState.initialize(cfg, split.num_classes)
    if not cfg.supervised_only:
        pretrain_unsupervised(split, cfg, state, run_log)
        run_log.checkpoint(state, Phase.PRETRAIN, 0)

    prepared = prepare_split(split, cfg, state.dtype)
    best_accuracy, best = -1.0, None
    for iteration in range(1, cfg.iterations + 1):
        stage1_supervised(state, split, cfg, iteration, run_log)
        run_log.checkpoint(state, Phase.STAGE1, iteration)
        if not cfg.supervised_only:
            pseudo_labels = refresh_pseudo_labels(state, split)
            stage2_contrast(state, split, pseudo_labels, cfg, iteration, run_log)
            run_log.checkpoint(state, Phase.STAGE2, iteration)
        accuracy = _labelled_accuracy(predict(state, prepared.labelled), prepared.labelled)
        logger.info("Iteration %d: labelled-set accuracy %.2f", iteration, accuracy)
        if accuracy >= best_accuracy:
            best_accuracy, best = accuracy, state.snapshot()
    if best is not None:
        state.restore(best)

    metrics = evaluate_model(state, prepared)
    logger.info("Final evaluation: %s", metrics.model_dump())
    return RunResult(state, run_log.reports, metrics)
