# Compiled implementations of the hot distance kernels.
#
# Semantics must match _fallback.py: squared Euclidean distances in
# float64, argmin ties resolved to the lowest center index.

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def assign_points(points, centers):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] x = \
        np.ascontiguousarray(points, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] c = \
        np.ascontiguousarray(centers, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t k = c.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] labels = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sq_dists = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i, j, m
    cdef double best, acc, diff
    cdef Py_ssize_t best_j
    for i in range(n):
        best = -1.0
        best_j = 0
        for j in range(k):
            acc = 0.0
            for m in range(d):
                diff = x[i, m] - c[j, m]
                acc += diff * diff
            if best < 0.0 or acc < best:
                best = acc
                best_j = j
        labels[i] = best_j
        sq_dists[i] = best
    return labels, sq_dists


def accumulate_centers(points, labels, k):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] x = \
        np.ascontiguousarray(points, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] lab = \
        np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] sums = np.zeros((k, d), dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(k, dtype=np.int64)
    cdef Py_ssize_t i, m
    cdef Py_ssize_t g
    cdef Py_ssize_t kk = k
    for i in range(n):
        g = lab[i]
        if g < 0 or g >= kk:
            raise IndexError(f"label {g} out of range [0, {kk})")
        counts[g] += 1
        for m in range(d):
            sums[g, m] += x[i, m]
    return sums, counts
