"""Pseudo-label clustering and novel-class-count estimation.

k-means (k-means++ seeding, Lloyd iterations) produces pseudo-labels in
the frozen representation space. Over-clustering the labeled base
session and greedily merging centroids down to the true class count
calibrates a merge threshold ``d_min``; later sessions over-cluster and
merge until the closest pair exceeds ``d_min``, and the surviving
cluster count is the estimated number of novel classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import _kernels
from .dataio import EmbeddingSet


class ClusteringError(ValueError):
    """Invalid clustering request (bad k, empty input, ...)."""


@dataclass(frozen=True)
class ClusterAssignment:
    """Result of one k-means run; no cluster index is empty."""

    labels: np.ndarray  # (n,) int64 in [0, k)
    centers: np.ndarray  # (k, d) float64
    sizes: np.ndarray  # (k,) int64, sums to n
    inertia: float
    inertia_history: tuple[float, ...] = ()

    @property
    def k(self) -> int:
        return self.centers.shape[0]


@dataclass(frozen=True)
class MergeCalibration:
    """Merge threshold derived from the labeled base session."""

    d_min: float
    overcluster_factor: int
    source_class_count: int

    def __post_init__(self):
        if self.d_min <= 0:
            raise ClusteringError("d_min must be positive")


def _as_matrix(data: Union[EmbeddingSet, np.ndarray]) -> np.ndarray:
    if isinstance(data, EmbeddingSet):
        data = data.data
    x = np.ascontiguousarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise ClusteringError(f"expected a 2-D matrix, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ClusteringError("data contains non-finite values")
    return x


def _plus_plus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++: each next center drawn with probability proportional to
    the squared distance to the nearest already-chosen center."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = x[first]
    closest = np.square(x - centers[0]).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # All remaining points coincide with a chosen center.
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[i] = x[idx]
        np.minimum(closest, np.square(x - centers[i]).sum(axis=1), out=closest)
    return centers


def kmeans(
    data: Union[EmbeddingSet, np.ndarray],
    k: int,
    seed: int,
    max_iters: int = 300,
    tol: float = 1e-4,
    n_init: int = 10,
) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding, deterministic given ``seed``.

    Runs ``n_init`` independent seedings and keeps the lowest-inertia
    result, which guards against the occasional bad k-means++ draw.
    Empty clusters are repaired by donating the point currently farthest
    from its center. Per-iteration inertia is checked to be
    non-increasing; a violation raises, since it would indicate a broken
    distance kernel.
    """
    x = _as_matrix(data)
    n = x.shape[0]
    if k <= 0:
        raise ClusteringError(f"k must be positive, got {k}")
    if k > n:
        raise ClusteringError(f"k={k} exceeds the number of points n={n}")
    if n_init < 1:
        raise ClusteringError("n_init must be positive")
    if max_iters < 1:
        raise ClusteringError("max_iters must be positive")
    if tol < 0:
        raise ClusteringError("tol must be non-negative")

    best = None
    for init in range(n_init):
        run = _lloyd(x, k, np.random.default_rng([seed, init]), max_iters, tol)
        if best is None or run.inertia < best.inertia:
            best = run
    return best


def _lloyd(
    x: np.ndarray, k: int, rng: np.random.Generator, max_iters: int, tol: float
) -> ClusterAssignment:
    n = x.shape[0]
    centers = _plus_plus_init(x, k, rng)

    labels = np.zeros(n, dtype=np.int64)
    history: list[float] = []
    scale = max(1e-12, float(np.abs(centers).max()))
    for _ in range(max_iters):
        labels, sq_dists = _kernels.assign_points(x, centers)
        counts = np.bincount(labels, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            # Donor must leave a non-empty cluster behind.
            eligible = counts[labels] >= 2
            donor = int(np.where(eligible, sq_dists, -np.inf).argmax())
            counts[labels[donor]] -= 1
            counts[empty] += 1
            labels[donor] = empty
            sq_dists[donor] = 0.0
        sums, sizes = _kernels.accumulate_centers(x, labels, k)
        new_centers = sums / sizes[:, None]

        # Inertia against the points' own clusters with the updated centers.
        inertia = float(np.square(x - new_centers[labels]).sum())
        if history and inertia > history[-1] * (1 + 1e-12) + 1e-12:
            raise AssertionError(
                f"inertia increased across Lloyd iterations: {history[-1]} -> {inertia}"
            )
        history.append(inertia)

        shift = float(np.sqrt(np.square(new_centers - centers).sum(axis=1).max()))
        centers = new_centers
        if shift <= tol * scale:
            break

    sizes = np.bincount(labels, minlength=k).astype(np.int64)
    return ClusterAssignment(
        labels=labels,
        centers=centers,
        sizes=sizes,
        inertia=history[-1],
        inertia_history=tuple(history),
    )


def _closest_pair(centers: list[np.ndarray]) -> tuple[int, int, float]:
    """Lexicographically-first pair attaining the minimal centroid distance."""
    best = (0, 1, np.inf)
    m = len(centers)
    stacked = np.asarray(centers)
    for i in range(m - 1):
        d = np.sqrt(np.square(stacked[i + 1 :] - stacked[i]).sum(axis=1))
        j = int(d.argmin())
        if d[j] < best[2]:
            best = (i, i + 1 + j, float(d[j]))
    return best


def agglomerative_merge(
    centers: np.ndarray,
    sizes: np.ndarray,
    target_count: Optional[int] = None,
    threshold: Optional[float] = None,
) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int, float]]]:
    """Greedy centroid-linkage merging with size-weighted means.

    Exactly one stopping rule must be given: merge down to
    ``target_count`` clusters, or merge while the closest pair is within
    ``threshold`` (strictly greater stops). Distances are recomputed
    after every merge. The log records ``(i, j, distance)`` with indices
    as of the time of the merge; the pair is replaced at position ``i``.
    """
    if (target_count is None) == (threshold is None):
        raise ClusteringError("specify exactly one of target_count or threshold")
    if np.asarray(centers).size == 0:
        raise ClusteringError("no clusters to merge")
    cur_centers = [np.array(c, dtype=np.float64) for c in np.atleast_2d(centers)]
    cur_sizes = [int(s) for s in np.atleast_1d(sizes)]
    if len(cur_centers) != len(cur_sizes):
        raise ClusteringError("centers and sizes disagree in length")
    if target_count is not None and not 1 <= target_count <= len(cur_centers):
        raise ClusteringError(
            f"target_count={target_count} out of range [1, {len(cur_centers)}]"
        )

    log: list[tuple[int, int, float]] = []
    while len(cur_centers) > 1:
        if target_count is not None and len(cur_centers) <= target_count:
            break
        i, j, dist = _closest_pair(cur_centers)
        if threshold is not None and dist > threshold:
            break
        si, sj = cur_sizes[i], cur_sizes[j]
        cur_centers[i] = (si * cur_centers[i] + sj * cur_centers[j]) / (si + sj)
        cur_sizes[i] = si + sj
        del cur_centers[j], cur_sizes[j]
        log.append((i, j, dist))
    return np.asarray(cur_centers), np.asarray(cur_sizes, dtype=np.int64), log


def min_pairwise_distance(centers: np.ndarray) -> float:
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if centers.shape[0] < 2:
        raise ClusteringError("need at least two clusters for a pairwise distance")
    return _closest_pair(list(centers))[2]


DMIN_RULES = ("merge_max", "last_merge", "survivor_min")


def calibrate_dmin(
    base: EmbeddingSet,
    overcluster_factor: int,
    seed: int,
    rule: str = "merge_max",
) -> MergeCalibration:
    """Derive the merge threshold from the labeled base session.

    Over-clusters to ``overcluster_factor * C`` and merges back down to
    the true class count C. ``rule`` picks what d_min means:

    * ``"merge_max"`` (default): the largest merge distance that stays
      strictly below the surviving clusters' own minimal separation,
      i.e. the largest threshold that replays the merge without fusing
      any of the base's surviving clusters. Centroid-linkage merge
      distances are not monotone, so the plain last-merge distance is
      unstable; and capping at the survivors' separation keeps one
      spuriously large merge (a sub-cluster straddling two classes)
      from poisoning the threshold.
    * ``"last_merge"``: the distance of the final merge performed.
    * ``"survivor_min"``: the minimal pairwise distance among the C
      surviving clusters (an inter-class distance).

    The within-class rules fall back to the surviving minimum when the
    factor is 1 and no merge happens.
    """
    if rule not in DMIN_RULES:
        raise ClusteringError(f"unknown d_min rule {rule!r}")
    labels = base.require_labels()
    classes = np.unique(labels)
    if classes.size < 2:
        raise ClusteringError("calibration needs at least two base classes")
    if overcluster_factor < 1:
        raise ClusteringError("overcluster_factor must be a positive integer")
    m = overcluster_factor * classes.size
    if m > base.count:
        raise ClusteringError(
            f"overcluster count {m} exceeds the number of points {base.count}"
        )
    assignment = kmeans(base, m, seed=seed)
    merged_centers, _, log = agglomerative_merge(
        assignment.centers, assignment.sizes, target_count=classes.size
    )
    survivor_floor = min_pairwise_distance(merged_centers)
    if rule == "merge_max" and log:
        consistent = [dist for _, _, dist in log if dist < survivor_floor]
        d_min = max(consistent) if consistent else survivor_floor
    elif rule == "last_merge" and log:
        d_min = log[-1][2]
    else:
        d_min = survivor_floor
    return MergeCalibration(
        d_min=d_min,
        overcluster_factor=overcluster_factor,
        source_class_count=int(classes.size),
    )


def estimate_class_count(
    novel: Union[EmbeddingSet, np.ndarray],
    calib: MergeCalibration,
    assumed_upper_bound: int,
    seed: int,
) -> int:
    """Over-cluster to the assumed upper bound, merge while the closest
    pair is within the calibrated d_min, and count what survives."""
    x = _as_matrix(novel)
    if assumed_upper_bound > x.shape[0]:
        raise ClusteringError(
            f"assumed_upper_bound {assumed_upper_bound} exceeds n={x.shape[0]}"
        )
    assignment = kmeans(x, assumed_upper_bound, seed=seed)
    merged_centers, _, _ = agglomerative_merge(
        assignment.centers, assignment.sizes, threshold=calib.d_min
    )
    return int(merged_centers.shape[0])
