"""Rehearsal-free class memory: per-cluster Gaussians and replay sampling.

Each discovered cluster is summarized by a single Gaussian (mean plus
covariance). The memory keeps only these statistics, never raw rows, so
later sessions can regenerate training features for every class seen so
far without storing past data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .dataio import EmbeddingSet

SHRINKAGE = 0.1
VAR_FLOOR = 1e-4


class ReplayMemoryError(ValueError):
    """A memory entry violates its contract (e.g. non-PSD covariance)."""


@dataclass(frozen=True)
class ClusterGaussian:
    """Gaussian summary of one cluster; ``cov`` is (D, D) or, in
    diagonal mode, a length-D vector of per-coordinate variances."""

    class_id: int
    mean: np.ndarray
    cov: np.ndarray
    n: int
    session: int

    def __post_init__(self):
        if self.n < 1:
            raise ReplayMemoryError("cluster sample count must be >= 1")
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if cov.shape not in ((mean.size, mean.size), (mean.size,)):
            raise ReplayMemoryError(f"covariance shape {cov.shape} does not match dim {mean.size}")
        if not (np.isfinite(mean).all() and np.isfinite(cov).all()):
            raise ReplayMemoryError("Gaussian parameters must be finite")
        if cov.ndim == 1:
            if (cov <= 0).any():
                raise ReplayMemoryError("diagonal variances must be positive")
        elif not np.array_equal(cov, cov.T):
            raise ReplayMemoryError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def diagonal(self) -> bool:
        return self.cov.ndim == 1

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class GaussianMemory:
    """Append-only list of per-class Gaussians, class_ids contiguous from 0."""

    entries: tuple[ClusterGaussian, ...] = ()

    def __post_init__(self):
        ids = [e.class_id for e in self.entries]
        if ids != list(range(len(ids))):
            raise ReplayMemoryError(f"class_ids must be contiguous from 0, got {ids}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def dim(self) -> int:
        if not self.entries:
            raise ReplayMemoryError("memory is empty")
        return self.entries[0].dim

    def extended(self, new_entries: Sequence[ClusterGaussian]) -> "GaussianMemory":
        return GaussianMemory(self.entries + tuple(new_entries))

    def means(self) -> np.ndarray:
        return np.stack([e.mean for e in self.entries])


def fit_gaussians(
    data: Union[EmbeddingSet, np.ndarray],
    assignment: np.ndarray,
    id_offset: int = 0,
    session: int = 0,
    shrinkage: float = SHRINKAGE,
    var_floor: float = VAR_FLOOR,
) -> list[ClusterGaussian]:
    """Per-cluster sample mean and shrunk sample covariance.

    Full covariance gets ``(1-l)*S + l*diag(S) + var_floor*I``; clusters
    smaller than the dimensionality fall back to diagonal variances
    (same floor), which keeps the factorization well-posed in high-D.
    """
    x = data.data if isinstance(data, EmbeddingSet) else data
    x = np.asarray(x, dtype=np.float64)
    assignment = np.asarray(assignment)
    k = int(assignment.max()) + 1
    if not np.array_equal(np.unique(assignment), np.arange(k)):
        raise ReplayMemoryError("assignment must cover [0, k) with no empty cluster")

    out = []
    for c in range(k):
        rows = x[assignment == c]
        n = rows.shape[0]
        d = rows.shape[1]
        mean = rows.mean(axis=0)
        centered = rows - mean
        if n >= max(2, d):
            s = centered.T @ centered / (n - 1)
            s = (s + s.T) / 2.0  # dgemm does not guarantee bitwise symmetry
            cov = (1.0 - shrinkage) * s + shrinkage * np.diag(np.diag(s))
            cov[np.diag_indices(d)] += var_floor
        else:
            var = centered.var(axis=0, ddof=1) if n >= 2 else np.zeros(d)
            cov = var + var_floor
        out.append(
            ClusterGaussian(class_id=id_offset + c, mean=mean, cov=cov, n=n, session=session)
        )
    return out


def sample_replay(
    memory: GaussianMemory, per_class: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``per_class`` feature rows from every stored Gaussian.

    Each class has its own RNG stream keyed by (seed, class_id), so the
    draw for a class does not depend on how many other classes the
    memory holds or in what order.
    """
    if len(memory) == 0:
        raise ReplayMemoryError("memory is empty")
    if per_class < 1:
        raise ReplayMemoryError("per_class must be >= 1")
    d = memory.dim
    features = np.empty((len(memory) * per_class, d), dtype=np.float64)
    labels = np.empty(len(memory) * per_class, dtype=np.int64)
    for row, entry in enumerate(memory.entries):
        rng = np.random.default_rng([seed, entry.class_id])
        z = rng.standard_normal((per_class, d))
        if entry.diagonal:
            draw = entry.mean + z * np.sqrt(entry.cov)
        else:
            try:
                chol = np.linalg.cholesky(entry.cov)
            except np.linalg.LinAlgError as exc:
                raise ReplayMemoryError(
                    f"covariance of class {entry.class_id} is not positive definite"
                ) from exc
            draw = entry.mean + z @ chol.T
        sl = slice(row * per_class, (row + 1) * per_class)
        features[sl] = draw
        labels[sl] = entry.class_id
    return features, labels
