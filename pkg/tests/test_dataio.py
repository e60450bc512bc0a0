import numpy as np
import pytest

from action_segmentation.dataio import (
    collect_class_map,
    downsample,
    encode_labels,
    load_dataset,
    load_sequence,
    read_features,
    read_label_dir,
    read_mapping,
    upsample_predictions,
    write_features,
    write_labels,
    write_mapping,
)
from action_segmentation.errors import (
    DataError,
    LabelLeakError,
    LengthMismatchError,
    MissingFileError,
    UnknownLabelError,
)
from action_segmentation.models import FeatureSequence, labels_revealed


def _sequence(labels, dim=2):
    labels = np.asarray(labels)
    features = np.arange(len(labels) * dim, dtype=np.float32).reshape(len(labels), dim)
    return FeatureSequence(video_id="v", features=features, labels=labels)


def test_features_round_trip(tmp_path):
    features = np.random.default_rng(0).standard_normal((5, 3)).astype(np.float32)
    write_features(tmp_path, "clip", features)
    assert np.array_equal(read_features(tmp_path, "clip"), features)
    assert (tmp_path / "clip.bin").stat().st_size == 5 * 3 * 4


def test_features_with_wrong_size_are_rejected(tmp_path):
    write_features(tmp_path, "clip", np.zeros((5, 3), dtype=np.float32))
    (tmp_path / "clip.bin").write_bytes(b"\x00" * 8)
    with pytest.raises(DataError):
        read_features(tmp_path, "clip")


def test_missing_sidecar(tmp_path):
    with pytest.raises(MissingFileError):
        read_features(tmp_path, "absent")


def test_malformed_sidecars_are_data_errors(tmp_path):
    write_features(tmp_path, "clip", np.zeros((5, 3), dtype=np.float32))
    for sidecar in ("{nope", '{"frames": 5}', '{"frames": "five", "dim": 3}', "[5, 3]"):
        (tmp_path / "clip.json").write_text(sidecar)
        with pytest.raises(DataError, match="clip.json"):
            read_features(tmp_path, "clip")


def test_non_finite_features_are_data_errors(tmp_path):
    write_mapping(tmp_path, ["a", "b"])
    features = np.zeros((4, 2), dtype=np.float32)
    features[2, 1] = np.nan
    write_features(tmp_path / "features", "v1", features)
    write_labels(tmp_path / "groundTruth" / "v1.txt", np.array([0, 0, 1, 1]), ["a", "b"])
    with pytest.raises(DataError, match="v1.bin"):
        load_sequence(tmp_path, "v1", read_mapping(tmp_path / "mapping.txt"))


def test_mapping(tmp_path):
    write_mapping(tmp_path, ["pour", "stir", "cut"])
    assert read_mapping(tmp_path / "mapping.txt") == {"pour": 0, "stir": 1, "cut": 2}
    (tmp_path / "broken.txt").write_text("0 pour\n2 stir\n")
    with pytest.raises(DataError):
        read_mapping(tmp_path / "broken.txt")


def test_unknown_label_names_the_file():
    with pytest.raises(UnknownLabelError, match="gt.txt"):
        encode_labels(["pour", "fold"], {"pour": 0}, "gt.txt")


def test_length_mismatch(tmp_path):
    write_mapping(tmp_path, ["a", "b"])
    write_features(tmp_path / "features", "v1", np.zeros((5, 2), dtype=np.float32))
    write_labels(tmp_path / "groundTruth" / "v1.txt", np.array([0, 0, 1, 1]), ["a", "b"])
    with pytest.raises(LengthMismatchError):
        load_sequence(tmp_path, "v1", read_mapping(tmp_path / "mapping.txt"))


def test_load_dataset_splits_whole_videos(dataset_dir):
    split = load_dataset(dataset_dir, labelled_fraction=0.5, seed=0)
    assert len(split.test) == 2  # from splits/test.txt
    assert len(split.labelled) == 3
    assert len(split.unlabelled) == 3
    assert split.num_classes == 3
    for seq in split.unlabelled:
        assert seq.labels is None
        with pytest.raises(LabelLeakError):
            seq.ground_truth()
        with labels_revealed():
            assert len(seq.ground_truth()) == seq.num_frames


def test_labelled_count_rounds_up(dataset_dir):
    assert len(load_dataset(dataset_dir, 0.05, seed=0).labelled) == 1
    assert len(load_dataset(dataset_dir, 0.34, seed=0).labelled) == 3
    full = load_dataset(dataset_dir, 1.0, seed=0)
    assert len(full.labelled) == 6 and not full.unlabelled


def test_labelled_selection_depends_on_seed_only(dataset_dir):
    first = [seq.video_id for seq in load_dataset(dataset_dir, 0.5, seed=3).labelled]
    again = [seq.video_id for seq in load_dataset(dataset_dir, 0.5, seed=3).labelled]
    assert first == again


def test_test_fraction_without_split_file(dataset_dir):
    (dataset_dir / "splits" / "test.txt").unlink()
    split = load_dataset(dataset_dir, 0.5, seed=0, test_fraction=0.25)
    assert len(split.test) == 2
    assert len(split.training) == 6
    assert not load_dataset(dataset_dir, 0.5, seed=0).test


def test_missing_directories(tmp_path):
    with pytest.raises(MissingFileError):
        load_dataset(tmp_path, 0.5, seed=0)


def test_downsample_chunks_and_majority_vote():
    seq = _sequence([0, 0, 1, 1, 2, 2, 2, 0, 0, 1])
    reduced = downsample(seq, 4)
    # chunks [0, 3), [3, 5), [5, 8), [8, 10)
    assert reduced.length == 4
    assert reduced.t_original == 10
    assert reduced.labels.tolist() == [0, 1, 2, 0]  # ties go to the label seen first
    assert np.allclose(reduced.features[0], seq.features[0:3].mean(axis=0))
    assert np.allclose(reduced.features[1], seq.features[3:5].mean(axis=0))


def test_downsample_halves():
    seq = FeatureSequence(video_id="v", features=np.array([[0.0], [2.0], [4.0], [6.0]]))
    assert downsample(seq, 2).features.tolist() == [[1.0], [5.0]]


@pytest.mark.parametrize("t_original, target", [(12, 4), (96, 32), (50, 50)])
def test_downsample_preserves_the_feature_mean(t_original, target):
    features = np.random.default_rng(3).standard_normal((t_original, 5)).astype(np.float32)
    reduced = downsample(FeatureSequence(video_id="v", features=features), target)
    assert np.allclose(reduced.features.mean(axis=0), features.astype(np.float64).mean(axis=0), atol=1e-6)


def test_upsample_inverts_the_chunking():
    assert upsample_predictions(np.array([0, 1, 2, 0]), 10).tolist() == [0, 0, 0, 1, 1, 2, 2, 2, 0, 0]


@pytest.mark.parametrize("t_original, target", [(10, 4), (97, 32), (256, 256), (1000, 7)])
def test_round_trip_lengths(t_original, target):
    reduced = downsample(_sequence(np.zeros(t_original, dtype=np.int64)), target)
    assert reduced.length == target
    assert len(upsample_predictions(reduced.labels, reduced.t_original)) == t_original


def test_aligned_labels_survive_down_and_up_sampling():
    labels = np.repeat([2, 0, 1, 2], 25)
    reduced = downsample(_sequence(labels), 20)
    assert np.array_equal(upsample_predictions(reduced.labels, 100), labels)


def test_short_sequences_are_repeated():
    reduced = downsample(_sequence([0, 1, 1]), 6)
    assert reduced.repeated
    assert reduced.length == 6
    assert reduced.labels.tolist() == [0, 0, 1, 1, 1, 1]


def test_label_directories(tmp_path):
    write_labels(tmp_path / "gt" / "a.txt", np.array([0, 1]), ["x", "y"])
    write_labels(tmp_path / "pred" / "a.txt", np.array([1, 1]), ["x", "y"])
    class_map = collect_class_map(tmp_path / "gt", tmp_path / "pred")
    assert class_map == {"x": 0, "y": 1}
    assert read_label_dir(tmp_path / "pred", class_map)["a"].tolist() == [1, 1]
