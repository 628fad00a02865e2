"""Synthetic benchmark generation.

Classes are isotropic unit-variance Gaussians whose means sit on a
scaled orthonormal frame, so every pair of class means is exactly
``separation`` apart. Each session gets a train and a test container;
a joint test container concatenates all sessions for the final
task-agnostic evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import (
    EmbeddingSet,
    RunOptions,
    SessionManifest,
    SessionSpec,
    save_manifest,
    write_embedding_container,
)


@dataclass(frozen=True)
class SyntheticSpec:
    sessions: int
    classes_per_session: int
    dim: int
    separation: float
    points_per_class: int
    seed: int
    test_points_per_class: int = 0  # 0 = points_per_class // 4, at least 1

    def __post_init__(self):
        if min(self.sessions, self.classes_per_session, self.dim, self.points_per_class) < 1:
            raise ValueError("all synthetic benchmark fields must be positive")
        if self.separation < 0:
            raise ValueError("separation must be non-negative")
        total = self.sessions * self.classes_per_session
        if total > self.dim:
            raise ValueError(
                f"{total} classes need dim >= {total} for equidistant placement, got {self.dim}"
            )

    @property
    def resolved_test_points(self) -> int:
        return self.test_points_per_class or max(1, self.points_per_class // 4)


def class_means(spec: SyntheticSpec) -> np.ndarray:
    """One mean per class; pairwise distances are exactly ``separation``."""
    total = spec.sessions * spec.classes_per_session
    means = np.zeros((total, spec.dim))
    np.fill_diagonal(means[:, :total], spec.separation / np.sqrt(2.0))
    return means


def _draw(mean: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    return mean + rng.standard_normal((count, mean.size))


def generate_synthetic_benchmark(
    spec: SyntheticSpec, out_dir, options: RunOptions = RunOptions()
) -> Path:
    """Write per-session train/test containers, a joint test container,
    and a manifest; returns the manifest path. Same spec, same bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    means = class_means(spec)

    session_specs = []
    joint_test_data = []
    joint_test_labels = []
    for t in range(spec.sessions):
        class_ids = range(
            t * spec.classes_per_session, (t + 1) * spec.classes_per_session
        )
        train_rows, train_labels = [], []
        test_rows, test_labels = [], []
        for cid in class_ids:
            train_rng = np.random.default_rng([spec.seed, cid, 0])
            test_rng = np.random.default_rng([spec.seed, cid, 1])
            train_rows.append(_draw(means[cid], spec.points_per_class, train_rng))
            train_labels.append(np.full(spec.points_per_class, cid, dtype=np.int32))
            test_rows.append(_draw(means[cid], spec.resolved_test_points, test_rng))
            test_labels.append(np.full(spec.resolved_test_points, cid, dtype=np.int32))

        train = EmbeddingSet(np.vstack(train_rows), np.concatenate(train_labels))
        test = EmbeddingSet(np.vstack(test_rows), np.concatenate(test_labels))
        write_embedding_container(train, out / f"train_{t}.fccd")
        write_embedding_container(test, out / f"test_{t}.fccd")
        joint_test_data.append(test.data)
        joint_test_labels.append(test.labels)
        session_specs.append(
            SessionSpec(
                path=f"train_{t}.fccd", labeled=(t == 0), class_count=spec.classes_per_session
            )
        )

    joint = EmbeddingSet(np.vstack(joint_test_data), np.concatenate(joint_test_labels))
    write_embedding_container(joint, out / "test_joint.fccd")

    manifest = SessionManifest(
        sessions=tuple(session_specs),
        seed=spec.seed,
        test="test_joint.fccd",
        options=options,
        root=out,
    )
    manifest_path = out / "manifest.json"
    save_manifest(manifest, manifest_path)
    return manifest_path
