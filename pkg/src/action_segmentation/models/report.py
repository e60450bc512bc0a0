"""
Reports emitted by evaluation, training and the CLI.
"""

from datetime import datetime
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

from .common import Phase

METRIC_NAMES = ("acc", "edit", "f1_10", "f1_25", "f1_50")
LOSS_NAMES = ("l_total", "l_ap_p", "l_ap_n", "l_aa_n", "l_pp_n", "l_nca", "l_ce")


class MetricReport(BaseModel):
    """Frame accuracy, segmental edit score and segmental F1, all percentages."""
    acc: float = Field(ge=0.0, le=100.0, description="Frame-wise accuracy")
    edit: float = Field(ge=0.0, le=100.0, description="Segmental edit score")
    f1_10: float = Field(ge=0.0, le=100.0, description="Segmental F1 at IoU 0.10")
    f1_25: float = Field(ge=0.0, le=100.0, description="Segmental F1 at IoU 0.25")
    f1_50: float = Field(ge=0.0, le=100.0, description="Segmental F1 at IoU 0.50")

    @classmethod
    def mean(cls, reports: List["MetricReport"]) -> "MetricReport":
        """Per-video average, the dataset-level aggregate."""
        if not reports:
            raise ValueError("cannot average an empty list of reports")
        return cls(**{name: sum(getattr(r, name) for r in reports) / len(reports) for name in METRIC_NAMES})


class TrainingPhaseReport(BaseModel):
    """One epoch of one training phase."""
    phase: Phase
    iteration: int = Field(ge=0, description="Outer iteration, 0 for pretraining")
    epoch: int = Field(ge=0)
    losses: Dict[str, float] = Field(default_factory=dict, description="Mean loss components of the epoch")
    metrics: Optional[MetricReport] = Field(default=None, description="Evaluation snapshot after the epoch")
    seconds: float = Field(default=0.0, ge=0.0, description="Wall-clock duration of the epoch")

    @field_validator("losses")
    @classmethod
    def _finite(cls, value: Dict[str, float]) -> Dict[str, float]:
        for name, loss in value.items():
            if loss != loss or loss in (float("inf"), float("-inf")):
                raise ValueError(f"loss component {name} is not finite")
        return value

    def csv_row(self) -> Dict[str, object]:
        row: Dict[str, object] = {"phase": self.phase.value, "iter": self.iteration, "epoch": self.epoch}
        for name in LOSS_NAMES:
            row[name] = f"{self.losses.get(name, 0.0):.6f}"
        for name in METRIC_NAMES:
            row[name] = f"{getattr(self.metrics, name):.4f}" if self.metrics else ""
        row["seconds"] = f"{self.seconds:.3f}"
        return row


LOG_COLUMNS = ["phase", "iter", "epoch", *LOSS_NAMES, *METRIC_NAMES, "seconds"]


class RunManifest(BaseModel):
    """Provenance of a CLI run, written to runs/<name>/manifest.json."""
    run_name: str
    command: str
    config_path: Optional[str] = None
    config_hash: Optional[str] = Field(default=None, description="SHA-256 of the config file at launch")
    resolved_config_hash: str = Field(description="SHA-256 of the resolved config")
    dataset_root: Optional[str] = None
    seed: int
    phase_timestamps: Dict[str, datetime] = Field(default_factory=dict)
    artifacts: List[str] = Field(default_factory=list)
