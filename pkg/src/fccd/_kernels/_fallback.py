"""Pure-NumPy implementations of the hot distance kernels."""

import numpy as np

BACKEND = "python"

# Bound on the n*k*d broadcast temporary, in float64 elements.
_CHUNK_ELEMS = 4_000_000


def assign_points(points, centers):
    """Nearest center per row of ``points`` under squared Euclidean distance.

    Returns ``(labels, sq_dists)``; ties go to the lowest center index.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    n = points.shape[0]
    labels = np.empty(n, dtype=np.int64)
    sq_dists = np.empty(n, dtype=np.float64)
    step = max(1, _CHUNK_ELEMS // max(1, centers.size))
    for start in range(0, n, step):
        block = points[start : start + step]
        d2 = np.square(block[:, None, :] - centers[None, :, :]).sum(axis=2)
        idx = d2.argmin(axis=1)
        labels[start : start + step] = idx
        sq_dists[start : start + step] = d2[np.arange(block.shape[0]), idx]
    return labels, sq_dists


def accumulate_centers(points, labels, k):
    """Per-cluster coordinate sums and member counts."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    sums = np.zeros((k, points.shape[1]), dtype=np.float64)
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return sums, counts
