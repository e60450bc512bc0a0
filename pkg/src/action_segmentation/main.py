#!/usr/bin/env python
"""
Command-line entry point.

    action_segmentation [GLOBAL OPTIONS] synth|pretrain|probe|train|eval|plot ...

Artifacts of a run go to $ACTSEG_RUNS_DIR/<run> (default runs/<run>).
Exit codes: 0 success, 2 config error, 3 data error, 4 runtime error.
"""

import csv
import functools
import io
import logging
import os
import shutil
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional

import typer
from dotenv import load_dotenv
from rich.logging import RichHandler

from .core import config_hash, file_hash
from .dataio import collect_class_map, load_dataset, read_label_dir, read_mapping, write_predictions
from .errors import ActionSegmentationError, ConfigError, LengthMismatchError, MissingFileError, RunExistsError
from .evaluation import score
from .models import (
    METRIC_NAMES,
    Ablation,
    DatasetSplit,
    ExperimentConfig,
    MetricReport,
    Phase,
    RunManifest,
    TrainingPhaseReport,
    apply_ablations,
    load_config,
    load_synth_spec,
    validate_config,
)
from .plotting import plot_curves, plot_timelines
from .state import ModelState
from .synth import generate_dataset, write_dataset
from .trainer import RunLog, linear_probe, predict_split, pretrain_unsupervised, run_semi_supervised

# Load environment variables
load_dotenv()

logger = logging.getLogger("action_segmentation")

app = typer.Typer(
    help="Semi-supervised temporal action segmentation with multi-level contrast.",
    add_completion=False,
    no_args_is_help=True,
)


@dataclass
class GlobalOptions:
    config: Optional[Path] = None
    preset: Optional[str] = None
    data: Optional[Path] = None
    run: Optional[str] = None
    seed: Optional[int] = None
    labelled_fraction: Optional[float] = None
    ablate: List[Ablation] = field(default_factory=list)
    overwrite: bool = False
    phase_timestamps: Dict[str, datetime] = field(default_factory=dict)

    def mark(self, phase: str) -> None:
        self.phase_timestamps[phase] = datetime.now(timezone.utc)

    def runs_root(self) -> Path:
        return Path(os.getenv("ACTSEG_RUNS_DIR", "runs"))

    def run_dir(self) -> Path:
        if not self.run:
            raise ConfigError("run", self.run, "--run is required for this command")
        return self.runs_root() / self.run

    def resolve_config(self) -> ExperimentConfig:
        overrides = {"rng_seed": self.seed, "labelled_fraction": self.labelled_fraction}
        cfg = load_config(self.config, self.preset, overrides)
        return apply_ablations(cfg, self.ablate)

    def load_split(self, cfg: ExperimentConfig) -> DatasetSplit:
        if self.data is None:
            raise ConfigError("data", None, "--data is required for this command")
        return load_dataset(self.data, cfg.labelled_fraction, cfg.rng_seed, cfg.test_fraction)


def _configure_logging(verbose: bool) -> None:
    level = "DEBUG" if verbose else os.getenv("ACTSEG_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
        force=True,
    )


def _claim(directory: Path, overwrite: bool) -> Path:
    """Create an output directory, refusing to clobber a non-empty one unless told to."""
    if directory.exists() and any(directory.iterdir()):
        if not overwrite:
            raise RunExistsError(f"{directory} already exists; pass --overwrite to replace it")
        shutil.rmtree(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _write_manifest(opts: GlobalOptions, command: str, cfg: ExperimentConfig, run_dir: Path) -> Path:
    opts.mark("finished")
    manifest = RunManifest(
        run_name=opts.run or run_dir.name,
        command=command,
        config_path=str(opts.config) if opts.config else None,
        config_hash=file_hash(opts.config.read_bytes()) if opts.config else None,
        resolved_config_hash=config_hash(cfg),
        dataset_root=str(opts.data) if opts.data else None,
        seed=cfg.rng_seed,
        phase_timestamps=dict(opts.phase_timestamps),
        artifacts=sorted(str(path.relative_to(run_dir)) for path in run_dir.rglob("*") if path.is_file()),
    )
    path = run_dir / "manifest.json"
    path.write_text(manifest.model_dump_json(indent=2) + "\n")
    return path


def _write_json(path: Path, metrics: MetricReport) -> None:
    path.write_text(metrics.model_dump_json(indent=2) + "\n")


def handle_errors(command: Callable) -> Callable:
    """Map pipeline errors onto exit codes, logging the diagnostic."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except typer.Exit:
            raise
        except ActionSegmentationError as exc:
            logger.error("%s: %s", type(exc).__name__, exc)
            raise typer.Exit(code=exc.exit_code) from exc
        except Exception as exc:
            logger.exception("Unexpected failure: %s", exc)
            raise typer.Exit(code=4) from exc

    return wrapper


@app.callback()
def main(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(None, "--config", help="JSON experiment config."),
    preset: Optional[str] = typer.Option(None, "--preset", help="Hyperparameter preset, applied before --config."),
    data: Optional[Path] = typer.Option(None, "--data", help="Dataset root directory."),
    run: Optional[str] = typer.Option(None, "--run", help="Run name under the runs directory."),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed of every random stream."),
    labelled_fraction: Optional[float] = typer.Option(None, "--labelled-fraction", help="Fraction of labelled videos."),
    ablate: List[Ablation] = typer.Option([], "--ablate", help="Ablation switch, repeatable."),
    overwrite: bool = typer.Option(False, "--overwrite", help="Replace existing outputs."),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging."),
):
    _configure_logging(verbose)
    ctx.obj = GlobalOptions(config, preset, data, run, seed, labelled_fraction, list(ablate), overwrite)
    ctx.obj.mark("started")


@app.command()
@handle_errors
def synth(
    ctx: typer.Context,
    spec: Optional[Path] = typer.Argument(None, help="YAML/JSON generator spec; packaged default when omitted."),
    out: Path = typer.Option(..., "--out", help="Directory to write the dataset to."),
):
    """Generate a synthetic dataset in the dataio layout."""
    opts: GlobalOptions = ctx.obj
    synth_spec = load_synth_spec(spec)
    if opts.seed is not None:
        synth_spec = synth_spec.model_copy(update={"seed": opts.seed})
    root = write_dataset(generate_dataset(synth_spec), _claim(out, opts.overwrite))
    logger.info("Synthetic dataset ready at %s", root)


@app.command()
@handle_errors
def pretrain(ctx: typer.Context):
    """Unsupervised pretraining of the temporal and semantic networks."""
    opts: GlobalOptions = ctx.obj
    cfg = opts.resolve_config()
    split = opts.load_split(cfg)
    cfg.check_clusters(split.num_classes)
    run_dir = _claim(opts.run_dir(), opts.overwrite)
    run_log = RunLog(run_dir)
    opts.mark("pretrain")
    state = pretrain_unsupervised(split, cfg, run_log=run_log)
    run_log.checkpoint(state, Phase.PRETRAIN, 0)
    _write_manifest(opts, "pretrain", cfg, run_dir)


@app.command()
@handle_errors
def probe(
    ctx: typer.Context,
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint whose temporal network is probed."),
):
    """Fit a linear probe on frozen temporal embeddings of the labelled videos and evaluate it.

    The checkpoint carries the config; only --seed and --labelled-fraction override it."""
    opts: GlobalOptions = ctx.obj
    options = {"--config": opts.config, "--preset": opts.preset, "--ablate": opts.ablate}
    given = [flag for flag, value in options.items() if value]
    if given:
        raise ConfigError("probe", given, "probing uses the checkpoint's config; drop these options")
    if not checkpoint.is_file():
        raise MissingFileError(f"missing checkpoint {checkpoint}")
    state = ModelState.load(checkpoint)
    updates = {"rng_seed": opts.seed, "labelled_fraction": opts.labelled_fraction}
    cfg = validate_config(state.config.model_copy(update={k: v for k, v in updates.items() if v is not None}))
    split = opts.load_split(cfg)
    run_dir = _claim(opts.run_dir(), opts.overwrite)
    opts.mark("probe")
    result = linear_probe(state, split, cfg)
    RunLog(run_dir).emit(TrainingPhaseReport(phase=Phase.PROBE, iteration=0, epoch=0, metrics=result.metrics))
    write_predictions(run_dir / "predictions", predict_split(state, split, result.probe), split.class_names)
    _write_json(run_dir / "metrics.json", result.metrics)
    logger.info("Probe: labelled-set accuracy %.2f, evaluation %s", result.train_accuracy, result.metrics.model_dump())
    _write_manifest(opts, "probe", cfg, run_dir)


@app.command()
@handle_errors
def train(ctx: typer.Context):
    """Pretraining followed by the iterative semi-supervised schedule."""
    opts: GlobalOptions = ctx.obj
    cfg = opts.resolve_config()
    split = opts.load_split(cfg)
    if not cfg.supervised_only:
        cfg.check_clusters(split.num_classes)
    run_dir = _claim(opts.run_dir(), opts.overwrite)
    opts.mark("train")
    result = run_semi_supervised(split, cfg, run_dir)
    result.state.save(run_dir / "ckpt_final.bin")
    write_predictions(run_dir / "predictions", predict_split(result.state, split), split.class_names)
    _write_json(run_dir / "metrics.json", result.metrics)
    _write_manifest(opts, "train", cfg, run_dir)


def _eval_rows(pred_dir: Path, gt_dir: Path, class_map: Dict[str, int], ignore: List[int]) -> List[Dict[str, str]]:
    predictions = read_label_dir(pred_dir, class_map)
    ground_truths = read_label_dir(gt_dir, class_map)
    missing = sorted(set(ground_truths) - set(predictions))
    if missing:
        raise MissingFileError(f"{pred_dir} has no predictions for {missing}")
    rows, reports = [], []
    for video_id, gt in ground_truths.items():
        pred = predictions[video_id]
        if len(pred) != len(gt):
            raise LengthMismatchError(f"{video_id}: {len(pred)} predicted frames but {len(gt)} ground-truth frames")
        report = score(pred, gt, ignore)
        reports.append(report)
        rows.append({"video": video_id, **{name: f"{getattr(report, name):.4f}" for name in METRIC_NAMES}})
    mean = MetricReport.mean(reports)
    rows.append({"video": "mean", **{name: f"{getattr(mean, name):.4f}" for name in METRIC_NAMES}})
    return rows


@app.command("eval")
@handle_errors
def evaluate_dirs(
    ctx: typer.Context,
    pred: Path = typer.Option(..., "--pred", help="Directory of predicted <video_id>.txt files."),
    gt: Path = typer.Option(..., "--gt", help="Directory of ground-truth <video_id>.txt files."),
    out: Optional[Path] = typer.Option(
        None, "--out", help="CSV to write; defaults to <run>/eval.csv when --run is set."
    ),
):
    """Score prediction files against ground truth: one CSV row per video plus the mean."""
    opts: GlobalOptions = ctx.obj
    cfg = opts.resolve_config()
    if opts.data is not None:
        class_map = read_mapping(opts.data / "mapping.txt")
    else:
        class_map = collect_class_map(pred, gt)
    rows = _eval_rows(pred, gt, class_map, list(cfg.ignore_classes))

    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=["video", *METRIC_NAMES], lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if out is None and opts.run:
        out = opts.run_dir() / "eval.csv"
    if out is not None:
        if out.exists() and not opts.overwrite:
            raise RunExistsError(f"{out} already exists; pass --overwrite to replace it")
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(buffer.getvalue())
        logger.info("Wrote %s", out)
    typer.echo(buffer.getvalue(), nl=False)


@app.command()
@handle_errors
def plot(
    ctx: typer.Context,
    pred: Optional[Path] = typer.Option(None, "--pred", help="Prediction directory; defaults to <run>/predictions."),
    gt: Optional[Path] = typer.Option(None, "--gt", help="Ground-truth directory; defaults to <data>/groundTruth."),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory; defaults to <run>/plots."),
):
    """Timeline SVGs (ground truth above prediction) and the training-curve SVG of a run."""
    opts: GlobalOptions = ctx.obj
    run_dir = opts.run_dir() if opts.run else None
    if pred is None and run_dir is not None and (run_dir / "predictions").is_dir():
        pred = run_dir / "predictions"
    if gt is None and opts.data is not None:
        gt = opts.data / "groundTruth"
    if out is None:
        if run_dir is None:
            raise ConfigError("out", None, "--out or --run is required")
        out = run_dir / "plots"
    out = _claim(out, opts.overwrite)

    written: List[Path] = []
    if pred is not None and gt is not None:
        if opts.data is not None:
            class_map = read_mapping(opts.data / "mapping.txt")
        else:
            class_map = collect_class_map(pred, gt)
        class_names = [name for name, _ in sorted(class_map.items(), key=lambda item: item[1])]
        written += plot_timelines(read_label_dir(gt, class_map), read_label_dir(pred, class_map), out, class_names)
    if run_dir is not None and (run_dir / "log.csv").is_file():
        written.append(plot_curves(run_dir / "log.csv", out / "curves.svg"))
    if not written:
        raise MissingFileError("nothing to plot: give --pred and --gt, or a --run with predictions or log.csv")
    logger.info("Wrote %d figures to %s", len(written), out)


if __name__ == "__main__":
    app()
