import itertools

import numpy as np
import pytest

from fccd.clustering import (
    ClusteringError,
    MergeCalibration,
    agglomerative_merge,
    calibrate_dmin,
    estimate_class_count,
    kmeans,
    min_pairwise_distance,
)
from fccd.dataio import EmbeddingSet


def _blobs(centers, per, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for i, c in enumerate(np.atleast_2d(centers)):
        rows.append(c + scale * rng.standard_normal((per, len(c))))
        labels.append(np.full(per, i))
    return np.vstack(rows), np.concatenate(labels)


# ---------------------------------------------------------------- kmeans


def test_kmeans_single_cluster_is_mean():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 4))
    a = kmeans(x, 1, seed=0)
    np.testing.assert_allclose(a.centers[0], x.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(a.inertia, ((x - x.mean(axis=0)) ** 2).sum(), rtol=1e-12)
    assert a.sizes.tolist() == [30]


def test_kmeans_k_equals_n():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(12, 3))
    a = kmeans(x, 12, seed=5)
    assert a.inertia == pytest.approx(0.0, abs=1e-20)
    assert sorted(a.labels.tolist()) == list(range(12))


def brute_force_two_clusters(x):
    """Minimal within-cluster SSE over all 2-partitions."""
    n = len(x)
    best = (np.inf, None)
    for mask_bits in range(1, 2 ** (n - 1)):
        mask = np.array([(mask_bits >> i) & 1 for i in range(n)], dtype=bool)
        if mask.all() or (~mask).all():
            continue
        sse = 0.0
        for part in (x[mask], x[~mask]):
            sse += ((part - part.mean(axis=0)) ** 2).sum()
        if sse < best[0]:
            best = (sse, mask)
    return best


def test_kmeans_two_cluster_example_matches_brute_force():
    x = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    sse, mask = brute_force_two_clusters(x)
    a = kmeans(x, 2, seed=0)
    assert a.inertia == pytest.approx(sse, rel=1e-12)
    got = {frozenset(np.flatnonzero(a.labels == c)) for c in range(2)}
    expected = {frozenset(np.flatnonzero(mask)), frozenset(np.flatnonzero(~mask))}
    assert got == expected
    centers = sorted(map(tuple, a.centers))
    assert centers == [(0.0, 0.5), (10.0, 0.5)]


def test_kmeans_rejects_bad_k():
    x = np.zeros((5, 2))
    with pytest.raises(ClusteringError):
        kmeans(x, 0, seed=0)
    with pytest.raises(ClusteringError):
        kmeans(x, 6, seed=0)


def test_kmeans_deterministic_given_seed():
    x, _ = _blobs(np.eye(3) * 4, per=40, seed=2)
    a = kmeans(x, 3, seed=11)
    b = kmeans(x, 3, seed=11)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.centers.tobytes() == b.centers.tobytes()
    assert a.inertia == b.inertia


def test_kmeans_inertia_history_non_increasing():
    rng = np.random.default_rng(6)
    for seed in range(5):
        x = rng.normal(size=(120, 8))
        a = kmeans(x, 6, seed=seed)
        hist = np.array(a.inertia_history)
        assert (np.diff(hist) <= 1e-9 * hist[:-1] + 1e-12).all()


def test_kmeans_permutation_equivariant():
    x, _ = _blobs(np.eye(4) * 6, per=25, seed=3)
    rng = np.random.default_rng(9)
    perm = rng.permutation(len(x))
    a = kmeans(x, 4, seed=7)
    b = kmeans(x[perm], 4, seed=7)
    # Compare partitions as sets of original-index sets.
    parts_a = {frozenset(np.flatnonzero(a.labels == c)) for c in range(4)}
    parts_b = {frozenset(perm[np.flatnonzero(b.labels == c)]) for c in range(4)}
    assert parts_a == parts_b


def test_kmeans_no_empty_clusters_with_duplicates():
    x = np.repeat(np.array([[0.0, 0.0], [5.0, 0.0]]), 10, axis=0)
    a = kmeans(x, 4, seed=0)
    assert (a.sizes >= 1).all()
    assert a.sizes.sum() == 20


# ------------------------------------------------- agglomerative merging


def _naive_merge(centers, sizes, target_count=None, threshold=None):
    """Independent reference: full distance rescan each step."""
    centers = [np.asarray(c, dtype=float) for c in centers]
    sizes = [int(s) for s in sizes]
    log = []
    while len(centers) > 1:
        if target_count is not None and len(centers) <= target_count:
            break
        best = None
        for i in range(len(centers)):
            for j in range(i + 1, len(centers)):
                d = float(np.sqrt(((centers[i] - centers[j]) ** 2).sum()))
                if best is None or d < best[0]:
                    best = (d, i, j)
        d, i, j = best
        if threshold is not None and d > threshold:
            break
        centers[i] = (sizes[i] * centers[i] + sizes[j] * centers[j]) / (sizes[i] + sizes[j])
        sizes[i] += sizes[j]
        del centers[j], sizes[j]
        log.append((i, j, d))
    return np.array(centers), np.array(sizes), log


def test_merge_three_singletons_to_two():
    centers = np.array([[0.0], [1.0], [10.0]])
    sizes = np.array([1, 1, 1])
    merged, new_sizes, log = agglomerative_merge(centers, sizes, target_count=2)
    assert log == [(0, 1, 1.0)]
    assert sorted(merged.ravel().tolist()) == [0.5, 10.0]
    assert sorted(new_sizes.tolist()) == [1, 2]


def test_merge_threshold_below_all_gaps_is_identity():
    centers = np.array([[0.0], [1.0], [10.0]])
    merged, sizes, log = agglomerative_merge(centers, np.ones(3), threshold=0.5)
    assert log == []
    assert merged.shape[0] == 3


def test_merge_identical_centers():
    centers = np.array([[2.0, 3.0], [2.0, 3.0]])
    merged, sizes, log = agglomerative_merge(centers, np.array([3, 5]), threshold=0.1)
    assert merged.shape[0] == 1
    np.testing.assert_allclose(merged[0], [2.0, 3.0])
    assert sizes.tolist() == [8]
    assert log[0][2] == 0.0


def test_merge_log_matches_exhaustive_oracle():
    rng = np.random.default_rng(12)
    for trial in range(25):
        k = int(rng.integers(2, 13))
        d = int(rng.integers(1, 6))
        centers = rng.normal(size=(k, d))
        sizes = rng.integers(1, 20, size=k)
        if trial % 2:
            stop = {"target_count": int(rng.integers(1, k + 1))}
        else:
            stop = {"threshold": float(rng.uniform(0, 3))}
        got_c, got_s, got_log = agglomerative_merge(centers, sizes, **stop)
        exp_c, exp_s, exp_log = _naive_merge(centers, sizes, **stop)
        assert [(i, j) for i, j, _ in got_log] == [(i, j) for i, j, _ in exp_log]
        np.testing.assert_allclose(
            [d for _, _, d in got_log], [d for _, _, d in exp_log], rtol=1e-12
        )
        np.testing.assert_allclose(got_c, exp_c, rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(got_s, exp_s)


def test_merge_conserves_global_centroid():
    rng = np.random.default_rng(13)
    centers = rng.normal(size=(9, 5))
    sizes = rng.integers(1, 30, size=9)
    total = (sizes[:, None] * centers).sum(axis=0) / sizes.sum()
    merged, new_sizes, _ = agglomerative_merge(centers, sizes, target_count=1)
    np.testing.assert_allclose(merged[0], total, rtol=1e-12)
    assert new_sizes.tolist() == [int(sizes.sum())]


def test_merge_argument_validation():
    with pytest.raises(ClusteringError):
        agglomerative_merge(np.empty((0, 2)), np.empty(0), target_count=1)
    with pytest.raises(ClusteringError):
        agglomerative_merge(np.zeros((2, 2)), np.ones(2))
    with pytest.raises(ClusteringError):
        agglomerative_merge(np.zeros((2, 2)), np.ones(2), target_count=3)


# ------------------------------------------- d_min calibration, estimation


def test_calibrate_degenerate_two_point_classes():
    # One repeated point per class at distance 5, factor 1: no merges can
    # happen, so d_min falls back to the surviving minimum, the class gap.
    data = np.array([[0.0, 0.0]] * 3 + [[5.0, 0.0]] * 3, dtype=np.float32)
    labels = np.array([0, 0, 0, 1, 1, 1], dtype=np.int32)
    calib = calibrate_dmin(EmbeddingSet(data, labels), overcluster_factor=1, seed=0)
    assert calib.d_min == pytest.approx(5.0)
    assert calib.source_class_count == 2


def test_calibrate_well_separated_classes():
    means = np.zeros((2, 8))
    means[1, 0] = 20.0
    base_x, base_y = _blobs(means, per=120, seed=21)
    calib = calibrate_dmin(
        EmbeddingSet(base_x.astype(np.float32), base_y.astype(np.int32)),
        overcluster_factor=3,
        seed=0,
    )
    assert 0 < calib.d_min < 10.0  # far below the inter-class gap
    novel_x, _ = _blobs(means, per=150, seed=22)
    assert estimate_class_count(novel_x, calib, assumed_upper_bound=6, seed=1) == 2


def test_calibrate_factor_too_large():
    data = np.random.default_rng(0).normal(size=(10, 2)).astype(np.float32)
    labels = np.array([0] * 5 + [1] * 5, dtype=np.int32)
    with pytest.raises(ClusteringError):
        calibrate_dmin(EmbeddingSet(data, labels), overcluster_factor=6, seed=0)


def test_calibrate_rules():
    means = np.zeros((2, 8))
    means[1, 0] = 20.0
    base_x, base_y = _blobs(means, per=120, seed=23)
    emb = EmbeddingSet(base_x.astype(np.float32), base_y.astype(np.int32))
    survivor = calibrate_dmin(emb, 3, seed=0, rule="survivor_min")
    last = calibrate_dmin(emb, 3, seed=0, rule="last_merge")
    merge_max = calibrate_dmin(emb, 3, seed=0, rule="merge_max")
    assert survivor.d_min == pytest.approx(20.0, rel=0.1)  # the inter-class gap
    assert last.d_min <= merge_max.d_min < survivor.d_min


def test_estimate_singletons_all_survive():
    # m singleton points with all pairwise gaps above d_min.
    x = np.arange(6, dtype=np.float64)[:, None] * 10.0
    calib = MergeCalibration(d_min=1.0, overcluster_factor=3, source_class_count=2)
    assert estimate_class_count(x, calib, assumed_upper_bound=6, seed=0) == 6


def test_estimate_three_gaussians_with_disjoint_calibration():
    base_means = np.zeros((3, 16))
    base_means[1, 0] = 12.0
    base_means[2, 1] = 12.0
    base_x, base_y = _blobs(base_means, per=100, seed=31)
    calib = calibrate_dmin(
        EmbeddingSet(base_x.astype(np.float32), base_y.astype(np.int32)), 3, seed=0
    )
    novel_means = np.zeros((3, 16))
    novel_means[0, 2] = 12.0
    novel_means[1, 3] = 12.0
    novel_means[2, 4] = 12.0
    novel_x, _ = _blobs(novel_means, per=150, seed=32)
    assert estimate_class_count(novel_x, calib, assumed_upper_bound=9, seed=2) == 3
    # Against the independent merge loop: same k-means sub-clusters, naive merge.
    assignment = kmeans(novel_x, 9, seed=2)
    naive_centers, _, _ = _naive_merge(
        assignment.centers, assignment.sizes, threshold=calib.d_min
    )
    assert len(naive_centers) == 3


def test_estimate_threshold_extremes():
    x, _ = _blobs(np.eye(4) * 8, per=30, seed=33)
    tiny = MergeCalibration(d_min=1e-300, overcluster_factor=3, source_class_count=4)
    assert estimate_class_count(x, tiny, assumed_upper_bound=12, seed=0) == 12
    huge = MergeCalibration(d_min=np.inf, overcluster_factor=3, source_class_count=4)
    assert estimate_class_count(x, huge, assumed_upper_bound=12, seed=0) == 1


def test_min_pairwise_distance():
    centers = np.array([[0.0], [3.0], [4.5]])
    assert min_pairwise_distance(centers) == pytest.approx(1.5)
    with pytest.raises(ClusteringError):
        min_pairwise_distance(centers[:1])
