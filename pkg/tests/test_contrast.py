import math

import numpy as np
import pytest
import torch
from sklearn.cluster import KMeans

from action_segmentation.contrast import (
    PairMask,
    SampledBatch,
    SMCWeights,
    dense_positive_loss,
    dynamic_mask,
    info_nce,
    kmeans,
    label_mask,
    mask_from_assignments,
    negative_loss,
    positive_loss,
    sample_frames,
    smc_loss,
    static_mask,
    supervised_mask,
    triplet_loss,
)
from action_segmentation.core import seeded_rng
from action_segmentation.errors import ClusteringError


def _log_sigmoid(z):
    return -math.log1p(math.exp(-z)) if z >= 0 else z - math.log1p(math.exp(z))


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _brute_mask(*assignments):
    n = len(assignments[0])
    out = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            out[i, j] = int(all(view[i] != view[j] for view in assignments))
    return out


def _random_batch(rng, rows=6, dim=3, scale=1.0):
    h = torch.as_tensor(rng.standard_normal((rows, dim)) * scale)
    x = torch.as_tensor(rng.standard_normal((rows, dim)) * scale)
    v = torch.as_tensor(rng.standard_normal((rows, 2)))
    return SampledBatch(v, x, h, np.zeros((rows, 2), dtype=np.int64))


def _random_mask(rng, rows):
    upper = np.triu(rng.integers(0, 2, (rows, rows)), 1)
    return PairMask(m=torch.as_tensor(upper + upper.T))


def test_mask_matches_brute_force(rng):
    for _ in range(200):
        views = [rng.integers(0, rng.integers(2, 6), 50) for _ in range(3)]
        m = mask_from_assignments(*views)
        assert np.array_equal(m.numpy(), _brute_mask(*views))
        PairMask(m=m)  # symmetric, binary, zero diagonal


def test_pair_mask_validation():
    with pytest.raises(ValueError):
        PairMask(m=torch.tensor([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        PairMask(m=torch.tensor([[1, 0], [0, 0]]))
    with pytest.raises(ValueError):
        PairMask(m=torch.tensor([[0, 2], [2, 0]]))
    with pytest.raises(ValueError):
        PairMask(m=torch.zeros(2, 3))
    assert PairMask(m=torch.tensor([[0, 1], [1, 0]])).count == 2


def test_label_mask():
    assert label_mask([0, 1, 0]).tolist() == [[1, 0, 1], [0, 1, 0], [1, 0, 1]]


def test_supervised_mask_skips_unknown_frames():
    mask = supervised_mask([0, 1, -1, 1])
    assert mask.m.tolist() == [[0, 1, 0, 1], [1, 0, 0, 0], [0, 0, 0, 0], [1, 0, 0, 0]]
    assert supervised_mask([2, 2, 2]).count == 0


def test_kmeans_recovers_separated_blobs(rng):
    centres = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    truth = np.repeat([0, 1, 2], 20)
    points = centres[truth] + 0.1 * rng.standard_normal((60, 2))
    found = kmeans(points, 3, seeded_rng(0))
    assert np.array_equal(label_mask(found.labels), label_mask(truth))
    assert found.centroids.shape == (3, 2)
    again = kmeans(points, 3, seeded_rng(0))
    assert np.array_equal(found.labels, again.labels)


def test_kmeans_needs_enough_points():
    with pytest.raises(ClusteringError):
        kmeans(np.zeros((3, 2)), 4, seeded_rng(0))


def test_dynamic_mask_intersects_three_clusterings(rng):
    batch = _random_batch(rng, rows=30)
    mask = dynamic_mask(batch, 3, seeded_rng(7))
    assert len(mask.views) == 3
    expected = _brute_mask(*(view.labels for view in mask.views))
    assert np.array_equal(mask.m.numpy(), expected)


def test_static_mask_uses_the_input_view_only(rng):
    batch = _random_batch(rng, rows=30)
    mask = static_mask(batch, 3, seeded_rng(7))
    reference = kmeans(batch.v_s, 3, seeded_rng(7))
    assert np.array_equal(mask.m.numpy(), 1 - label_mask(reference.labels).numpy())


def test_sample_frames_slices_every_view_alike(rng):
    V = torch.arange(2 * 10 * 1, dtype=torch.float64).reshape(2, 10, 1)
    X, H = V * 2, V * 3
    labels = np.arange(20).reshape(2, 10)
    batch = sample_frames(X, H, V, 4, rng, labels)
    assert batch.rows == 8
    assert torch.equal(batch.x_s, batch.v_s * 2)
    assert torch.equal(batch.h_s, batch.v_s * 3)
    for (video, frame), v, label in zip(batch.provenance, batch.v_s[:, 0], batch.labels):
        assert v == V[video, frame, 0]
        assert label == labels[video, frame]
    for video in range(2):
        frames = batch.provenance[batch.provenance[:, 0] == video, 1]
        assert np.all(np.diff(frames) > 0)
    with pytest.raises(ValueError):
        sample_frames(X, H, V, 11, rng)


def test_positive_loss_oracle(rng):
    for _ in range(100):
        rows, dim = rng.integers(1, 8), rng.integers(1, 5)
        scale = rng.uniform(0.1, 1.0)
        h, x = rng.standard_normal((rows, dim)), rng.standard_normal((rows, dim))
        expected = -sum(_log_sigmoid(_dot(h[i], x[i]) / scale) for i in range(rows)) / rows
        got = positive_loss(torch.as_tensor(h), torch.as_tensor(x), scale).item()
        assert abs(got - expected) < 1e-10


def test_negative_loss_oracle(rng):
    for _ in range(100):
        rows, dim = rng.integers(2, 8), rng.integers(1, 5)
        scale = rng.uniform(0.1, 1.0)
        a, b = rng.standard_normal((rows, dim)), rng.standard_normal((rows, dim))
        mask = _random_mask(rng, rows)
        m = mask.m.numpy()
        if m.sum() == 0:
            continue
        for first, second in ((a, b), (a, a), (b, b)):
            expected = -sum(
                m[i, j] * _log_sigmoid(-_dot(first[i], second[j]) / scale) for i in range(rows) for j in range(rows)
            ) / m.sum()
            got = negative_loss(torch.as_tensor(first), torch.as_tensor(second), mask, scale).item()
            assert abs(got - expected) < 1e-10


def test_negative_loss_of_an_empty_mask_is_zero(rng):
    a = torch.tensor(rng.standard_normal((4, 3)), requires_grad=True)
    loss = negative_loss(a, a, PairMask(m=torch.zeros(4, 4, dtype=torch.long)), 1.0)
    assert loss.item() == 0.0


def test_dense_positive_loss_oracle(rng):
    for _ in range(50):
        rows = rng.integers(2, 7)
        h, x = rng.standard_normal((rows, 3)), rng.standard_normal((rows, 3))
        positives = label_mask(rng.integers(0, 3, rows))
        p = positives.numpy()
        expected = -sum(
            p[i, j] * _log_sigmoid(_dot(h[i], x[j])) for i in range(rows) for j in range(rows)
        ) / p.sum()
        got = dense_positive_loss(torch.as_tensor(h), torch.as_tensor(x), positives, 1.0).item()
        assert abs(got - expected) < 1e-10


def test_smc_loss_is_the_weighted_sum(rng):
    weights = SMCWeights(ap_pos=0.5, ap_neg=2.0, aa_neg=0.0, pp_neg=1.5)
    for _ in range(100):
        batch = _random_batch(rng, rows=int(rng.integers(2, 8)))
        mask = _random_mask(rng, batch.rows)
        loss = smc_loss(batch, mask, 0.7, weights)
        c = {name: value.item() for name, value in loss.components.items()}
        expected = 0.5 * c["l_ap_p"] + 2.0 * c["l_ap_n"] + 1.5 * c["l_pp_n"]
        assert abs(loss.total.item() - expected) < 1e-10
        assert abs(c["l_ap_p"] - positive_loss(batch.h_s, batch.x_s, 0.7).item()) < 1e-10
        assert abs(c["l_aa_n"] - negative_loss(batch.h_s, batch.h_s, mask, 0.7).item()) < 1e-10


def test_smc_loss_spot_values():
    zeros = torch.zeros(3, 2, dtype=torch.float64)
    batch = SampledBatch(zeros, zeros, zeros, np.zeros((3, 2), dtype=np.int64))
    mask = PairMask(m=1 - torch.eye(3, dtype=torch.long))
    loss = smc_loss(batch, mask, 1.0)
    for value in loss.components.values():
        assert abs(value.item() - math.log(2)) < 1e-12
    assert abs(loss.total.item() - 4 * math.log(2)) < 1e-12


def test_single_class_batch_reduces_to_the_positive_term(rng):
    batch = _random_batch(rng, rows=5)
    loss = smc_loss(batch, supervised_mask([1] * 5), 1.0)
    assert loss.total.item() == pytest.approx(loss.components["l_ap_p"].item(), abs=1e-12)


def test_normalised_embeddings_bound_the_similarities(rng):
    batch = _random_batch(rng, rows=4, scale=100.0)
    loss = smc_loss(batch, _random_mask(rng, 4), 1.0, normalize=True)
    # |cos| <= 1 keeps every term within softplus(1)
    assert all(value.item() <= math.log1p(math.e) + 1e-12 for value in loss.components.values())


def test_smc_loss_gradients(rng):
    for _ in range(3):
        rows, dim = 8, 4
        mask = _random_mask(rng, rows)
        v = torch.zeros(rows, 1, dtype=torch.float64)
        provenance = np.zeros((rows, 2), dtype=np.int64)

        def loss(h, x):
            return smc_loss(SampledBatch(v, x, h, provenance), mask, 0.5).total

        h = torch.tensor(rng.standard_normal((rows, dim)), requires_grad=True)
        x = torch.tensor(rng.standard_normal((rows, dim)), requires_grad=True)
        assert torch.autograd.gradcheck(loss, (h, x), eps=1e-6, atol=1e-8, rtol=1e-4)


def test_smc_loss_central_differences(rng):
    rows, dim, eps = 8, 4, 1e-6
    mask = _random_mask(rng, rows)
    v = torch.zeros(rows, 1, dtype=torch.float64)
    h = torch.tensor(rng.standard_normal((rows, dim)), requires_grad=True)
    x = torch.as_tensor(rng.standard_normal((rows, dim)))

    def value(h_values):
        return smc_loss(SampledBatch(v, x, h_values, np.zeros((rows, 2))), mask, 1.0).total

    value(h).backward()
    numeric = torch.zeros_like(h)
    for i in range(rows):
        for j in range(dim):
            plus, minus = h.detach().clone(), h.detach().clone()
            plus[i, j] += eps
            minus[i, j] -= eps
            numeric[i, j] = (value(plus) - value(minus)) / (2 * eps)
    relative = (h.grad - numeric).norm() / numeric.norm()
    assert relative < 1e-4


def test_info_nce_oracle(rng):
    for _ in range(100):
        X = rng.standard_normal((6, 3))
        tau = rng.uniform(0.05, 1.0)
        positives, negatives = [1, 2], [3, 4, 5]

        def cos(i, j):
            return _dot(X[i], X[j]) / (np.linalg.norm(X[i]) * np.linalg.norm(X[j]))

        denominator_negatives = sum(math.exp(cos(0, n) / tau) for n in negatives)
        expected = np.mean([
            -math.log(math.exp(cos(0, p) / tau) / (math.exp(cos(0, p) / tau) + denominator_negatives))
            for p in positives
        ])
        got = info_nce(torch.as_tensor(X), 0, positives, negatives, tau).item()
        assert abs(got - expected) < 1e-10


def test_info_nce_rejects_overlapping_sets():
    X = torch.randn(4, 2, dtype=torch.float64)
    with pytest.raises(ValueError):
        info_nce(X, 0, [1], [1, 2], 0.1)
    with pytest.raises(ValueError):
        info_nce(X, 0, [], [1], 0.1)


def test_triplet_loss_oracle(rng):
    for _ in range(100):
        a, p, n = (rng.standard_normal(4) for _ in range(3))
        expected = -_log_sigmoid(_dot(a, p)) - _log_sigmoid(-_dot(a, n))
        got = triplet_loss(*(torch.as_tensor(t) for t in (a, p, n))).item()
        assert abs(got - expected) < 1e-10
    zero = torch.zeros(3, dtype=torch.float64)
    assert triplet_loss(zero, zero, zero).item() == pytest.approx(2 * math.log(2))


def _assignment_inertia(points, labels):
    return sum(((points[labels == c] - points[labels == c].mean(axis=0)) ** 2).sum() for c in np.unique(labels))


def test_kmeans_beats_random_assignments(rng):
    points = rng.standard_normal((80, 3))
    found = kmeans(points, 4, seeded_rng(2))
    for _ in range(50):
        assert found.inertia <= _assignment_inertia(points, rng.integers(0, 4, 80)) + 1e-9


def test_single_cluster_sits_at_the_mean(rng):
    points = rng.standard_normal((30, 2)) + 5.0
    found = kmeans(points, 1, seeded_rng(0))
    assert np.all(found.labels == 0)
    assert np.allclose(found.centroids[0], points.mean(axis=0))


def test_dynamic_mask_stays_inside_every_view(rng):
    for seed in range(10):
        mask = dynamic_mask(_random_batch(rng, rows=24), 3, seeded_rng(seed))
        for view in mask.views:
            assert torch.all(mask.m <= 1 - label_mask(view.labels))


@pytest.mark.parametrize(
    "similarity, scale, expected",
    [(0.0, 1.0, math.log(2)), (1.0, 1.0, 0.313262), (1.0, 0.1, 4.54e-5)],
)
def test_positive_loss_spot_values(similarity, scale, expected):
    h = torch.tensor([[similarity, 0.0]], dtype=torch.float64)
    x = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    assert positive_loss(h, x, scale).item() == pytest.approx(expected, rel=1e-4)


@pytest.mark.parametrize("scale", [1e-3, 1.0, 1e3])
def test_kmeans_tolerance_is_absolute(monkeypatch, rng, scale):
    import action_segmentation.contrast as contrast

    seen = []

    def spy(**kwargs):
        seen.append(kwargs["tol"])
        return KMeans(**kwargs)

    monkeypatch.setattr(contrast, "KMeans", spy)
    points = rng.standard_normal((40, 3)) * scale
    kmeans(points, 2, seeded_rng(0))
    assert seen[0] * np.var(points, axis=0).mean() == pytest.approx(1e-6)


def test_kmeans_tolerance_on_identical_points():
    found = kmeans(np.ones((5, 2)), 1, seeded_rng(0))
    assert found.inertia == pytest.approx(0.0)
