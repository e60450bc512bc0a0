"""
Reading and writing the action-segmentation dataset layout, and the
down-/up-sampling contract between original and working resolution.

Layout of a dataset root::

    features/<video_id>.bin    little-endian float32, row-major, T_ori x F
    features/<video_id>.json   {"frames": T_ori, "dim": F}
    groundTruth/<video_id>.txt one action name per line, T_ori lines
    mapping.txt                "<id> <action-name>" per line, ids 0..A-1
    splits/test.txt            optional, one held-out video id per line
"""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
from pydantic import ValidationError

from .core import seeded_rng
from .errors import DataError, LengthMismatchError, MissingFileError, UnknownLabelError
from .models import DatasetSplit, DownsampledSequence, FeatureSequence

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def read_mapping(path: PathLike) -> Dict[str, int]:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"missing class mapping {path}")
    class_map: Dict[str, int] = {}
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(maxsplit=1)
        if len(parts) != 2 or not parts[0].isdigit():
            raise DataError(f"{path}:{line_no}: expected '<id> <action-name>', got {line!r}")
        class_map[parts[1].strip()] = int(parts[0])
    if sorted(class_map.values()) != list(range(len(class_map))):
        raise DataError(f"{path}: class ids must be contiguous from 0")
    return class_map


def write_mapping(root: PathLike, class_names: Sequence[str]) -> None:
    lines = [f"{class_id} {name}" for class_id, name in enumerate(class_names)]
    (Path(root) / "mapping.txt").write_text("\n".join(lines) + "\n")


def read_features(features_dir: PathLike, video_id: str) -> np.ndarray:
    features_dir = Path(features_dir)
    binary = features_dir / f"{video_id}.bin"
    sidecar = features_dir / f"{video_id}.json"
    for path in (binary, sidecar):
        if not path.is_file():
            raise MissingFileError(f"missing feature file {path}")
    try:
        shape = json.loads(sidecar.read_text())
        frames, dim = int(shape["frames"]), int(shape["dim"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{sidecar}: malformed sidecar, expected integer keys 'frames' and 'dim'") from exc
    if frames < 1 or dim < 1:
        raise DataError(f"{sidecar}: frames and dim must be positive, got {frames}x{dim}")
    values = np.fromfile(binary, dtype="<f4")
    if values.size != frames * dim:
        raise LengthMismatchError(f"{binary}: {values.size} values, sidecar promises {frames}x{dim}")
    return values.reshape(frames, dim)


def write_features(features_dir: PathLike, video_id: str, features: np.ndarray) -> None:
    features_dir = Path(features_dir)
    features_dir.mkdir(parents=True, exist_ok=True)
    features = np.ascontiguousarray(features, dtype="<f4")
    (features_dir / f"{video_id}.bin").write_bytes(features.tobytes())
    (features_dir / f"{video_id}.json").write_text(
        json.dumps({"frames": int(features.shape[0]), "dim": int(features.shape[1])})
    )


def read_label_names(path: PathLike) -> List[str]:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"missing label file {path}")
    return [line.strip() for line in path.read_text().splitlines() if line.strip()]


def encode_labels(names: Sequence[str], class_map: Dict[str, int], source: str = "") -> np.ndarray:
    try:
        return np.array([class_map[name] for name in names], dtype=np.int64)
    except KeyError as exc:
        raise UnknownLabelError(f"{source}: label {exc.args[0]!r} is not in mapping.txt") from exc


def write_labels(path: PathLike, labels: np.ndarray, class_names: Sequence[str]) -> None:
    """One action name per line; used for ground truth and predictions alike."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(class_names[int(label)] for label in labels) + "\n")


def load_sequence(root: PathLike, video_id: str, class_map: Dict[str, int]) -> FeatureSequence:
    root = Path(root)
    features = read_features(root / "features", video_id)
    label_path = root / "groundTruth" / f"{video_id}.txt"
    labels = encode_labels(read_label_names(label_path), class_map, str(label_path))
    if len(labels) != features.shape[0]:
        raise LengthMismatchError(
            f"{video_id}: {features.shape[0]} feature frames but {len(labels)} label lines"
        )
    source = root / "features" / f"{video_id}.bin"
    try:
        return FeatureSequence(video_id=video_id, features=features, labels=labels, source_path=str(source))
    except ValidationError as exc:
        reason = exc.errors()[0]["msg"]
        raise DataError(f"{source}: {reason}") from exc


def _labelled_count(num_videos: int, fraction: float) -> int:
    return min(num_videos, max(1, math.ceil(num_videos * fraction - 1e-9)))


def load_dataset(
    root_dir: PathLike,
    labelled_fraction: float,
    seed: int,
    test_fraction: float = 0.0,
) -> DatasetSplit:
    """
    Load a dataset root and split its training videos into labelled and unlabelled.

    Whole videos are labelled: ceil(n * labelled_fraction) of them, chosen by
    seeded sampling over the video ids in sorted order. Held-out test videos
    come from splits/test.txt when present, else from test_fraction.

    Raises:
        MissingFileError, LengthMismatchError, UnknownLabelError
    """
    root = Path(root_dir)
    for required in ("features", "groundTruth"):
        if not (root / required).is_dir():
            raise MissingFileError(f"{root} has no {required}/ directory")
    class_map = read_mapping(root / "mapping.txt")

    video_ids = sorted(path.stem for path in (root / "features").glob("*.bin"))
    if not video_ids:
        raise MissingFileError(f"{root / 'features'} contains no .bin feature files")
    sequences = {video_id: load_sequence(root, video_id, class_map) for video_id in video_ids}

    rng = seeded_rng(seed)
    test_file = root / "splits" / "test.txt"
    if test_file.is_file():
        test_ids = sorted(set(read_label_names(test_file)))
        unknown = [video_id for video_id in test_ids if video_id not in sequences]
        if unknown:
            raise MissingFileError(f"{test_file} lists videos without features: {unknown}")
    else:
        num_test = int(round(len(video_ids) * test_fraction))
        test_ids = sorted(rng.choice(video_ids, size=num_test, replace=False).tolist()) if num_test else []
    held_out = set(test_ids)
    train_ids = [video_id for video_id in video_ids if video_id not in held_out]
    if not train_ids:
        raise DataError(f"{root}: every video is in the test split")

    num_labelled = _labelled_count(len(train_ids), labelled_fraction)
    labelled_ids = set(rng.choice(train_ids, size=num_labelled, replace=False).tolist())
    split = DatasetSplit(
        labelled=[sequences[video_id] for video_id in train_ids if video_id in labelled_ids],
        unlabelled=[sequences[video_id].hide_labels() for video_id in train_ids if video_id not in labelled_ids],
        test=[sequences[video_id] for video_id in test_ids],
        class_map=class_map,
    )
    logger.info(
        "Loaded %s: %d labelled, %d unlabelled, %d test videos, %d classes",
        root, len(split.labelled), len(split.unlabelled), len(split.test), split.num_classes,
    )
    return split


def _chunk_starts(t_original: int, target: int) -> np.ndarray:
    # ceil(c * T_ori / T) makes chunk c exactly the frames upsampling maps back to c
    return -((-np.arange(target + 1) * t_original) // target)


def _majority(labels: np.ndarray) -> int:
    values, first_seen, counts = np.unique(labels, return_index=True, return_counts=True)
    tied = counts == counts.max()
    return int(values[tied][np.argmin(first_seen[tied])])


def downsample(seq: FeatureSequence, target_T: int) -> DownsampledSequence:
    """
    Reduce a sequence to exactly target_T frames.

    Features are mean-pooled over contiguous near-equal chunks and labels
    take the per-chunk majority, ties going to the label seen first. When
    target_T exceeds the original length, frames are repeated instead and
    the result is flagged.
    """
    if target_T < 1:
        raise ValueError("target_T must be at least 1")
    t_original = seq.num_frames
    if target_T > t_original:
        logger.warning("%s: %d frames up-sampled to %d by repetition", seq.video_id, t_original, target_T)
        index = (np.arange(target_T) * t_original) // target_T
        return DownsampledSequence(
            features=seq.features[index],
            labels=None if seq.labels is None else seq.labels[index],
            t_original=t_original,
            repeated=True,
        )

    starts = _chunk_starts(t_original, target_T)
    counts = np.diff(starts)
    features = np.add.reduceat(seq.features.astype(np.float64), starts[:-1], axis=0) / counts[:, None]
    labels = None
    if seq.labels is not None:
        labels = np.array([_majority(seq.labels[s:e]) for s, e in zip(starts[:-1], starts[1:])], dtype=np.int64)
    return DownsampledSequence(features=features, labels=labels, t_original=t_original)


def upsample_predictions(pred: np.ndarray, t_original: int) -> np.ndarray:
    """Nearest-neighbour expansion: frame i takes pred[floor(i * T / T_ori)]."""
    pred = np.asarray(pred)
    if pred.ndim != 1 or len(pred) < 1:
        raise ValueError("pred must be a non-empty vector")
    return pred[(np.arange(t_original) * len(pred)) // t_original]


def write_predictions(out_dir: PathLike, predictions: Dict[str, np.ndarray], class_names: Sequence[str]) -> None:
    for video_id, labels in predictions.items():
        write_labels(Path(out_dir) / f"{video_id}.txt", labels, class_names)


def _label_files(directory: PathLike) -> Dict[str, List[str]]:
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingFileError(f"{directory} is not a directory")
    return {path.stem: read_label_names(path) for path in sorted(directory.glob("*.txt"))}


def collect_class_map(*directories: PathLike) -> Dict[str, int]:
    """Class ids for every action name found in the directories, in sorted name order."""
    names = {name for directory in directories for seq in _label_files(directory).values() for name in seq}
    return {name: class_id for class_id, name in enumerate(sorted(names))}


def read_label_dir(directory: PathLike, class_map: Dict[str, int]) -> Dict[str, np.ndarray]:
    """Read every <video_id>.txt of a directory into class-id vectors."""
    names = _label_files(directory)
    directory = Path(directory)
    return {
        video_id: encode_labels(seq, class_map, str(directory / f"{video_id}.txt"))
        for video_id, seq in names.items()
    }
