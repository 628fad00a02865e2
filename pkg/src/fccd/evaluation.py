"""Evaluation: optimal cluster-to-class mapping and accuracy metrics.

Discovered head indices are matched to hidden ground-truth class IDs
once per session by solving a maximum-overlap assignment (Hungarian
algorithm on the negated contingency matrix). The mapping is frozen
afterwards and reused for all later inference, so the final joint-test
evaluation is task-agnostic. Metrics follow the Last/Old/New convention:
overall accuracy, accuracy on base-session classes, and accuracy on all
discovered classes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .classifier import LinearHead, TrainConfig, l2_rows, predict, train_head
from .clustering import kmeans
from .dataio import EmbeddingSet

logger = logging.getLogger(__name__)

UNMAPPED = -1


class MappingError(ValueError):
    """Mapping update violates injectivity or session disjointness."""


def hungarian(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost assignment of rows to columns.

    Rectangular inputs are padded internally to square with zero cost;
    the returned ``min(R, C)`` pairs cover only real rows and columns.
    Runs the O(n^3) shortest-augmenting-path formulation with potentials
    and is fully deterministic.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.size == 0:
        raise ValueError("cost must be a non-empty 2-D matrix")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix contains non-finite entries")
    rows, cols = cost.shape
    n = max(rows, cols)
    a = np.zeros((n, n), dtype=np.float64)
    a[:rows, :cols] = cost

    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[j] = row assigned to column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used
            free[0] = False
            reduced = a[i0 - 1, :] - u[i0] - v[1:]
            better = np.zeros(n + 1, dtype=bool)
            better[1:] = free[1:] & (reduced < minv[1:])
            minv[better] = reduced[better[1:]]
            way[better] = j0
            candidates = np.where(free[1:], minv[1:], np.inf)
            j1 = int(candidates.argmin()) + 1
            delta = candidates[j1 - 1]
            u[match[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = int(way[j0])
            match[j0] = match[j1]
            j0 = j1

    pairs = [(int(match[j]) - 1, j - 1) for j in range(1, n + 1)]
    pairs = [(r, c) for r, c in pairs if r < rows and c < cols]
    pairs.sort()
    return pairs


@dataclass(frozen=True)
class ClusterMapping:
    """Persistent head-index -> ground-truth-class mapping.

    Entries are ``(head, class_id, session)``; once recorded they are
    never modified, and no two heads map to the same class.
    """

    entries: tuple[tuple[int, int, int], ...] = ()

    def __post_init__(self):
        heads = [h for h, _, _ in self.entries]
        gts = [g for _, g, _ in self.entries]
        if len(set(heads)) != len(heads):
            raise MappingError("a head index is mapped twice")
        if len(set(gts)) != len(gts):
            raise MappingError("two heads map to the same ground-truth class")

    def head_to_class(self) -> dict[int, int]:
        return {h: g for h, g, _ in self.entries}

    def class_ids(self) -> set[int]:
        return {g for _, g, _ in self.entries}

    def classes_of_session(self, session: int) -> set[int]:
        return {g for _, g, s in self.entries if s == session}

    def with_entries(self, new: Iterable[tuple[int, int, int]]) -> "ClusterMapping":
        return ClusterMapping(self.entries + tuple(new))

    def apply(self, head_indices: np.ndarray) -> np.ndarray:
        """Translate head indices to class IDs, UNMAPPED for surplus heads."""
        table = self.head_to_class()
        out = np.full(len(head_indices), UNMAPPED, dtype=np.int64)
        for i, h in enumerate(np.asarray(head_indices)):
            out[i] = table.get(int(h), UNMAPPED)
        return out


def identity_mapping(class_ids: Sequence[int], session: int = 0) -> ClusterMapping:
    """Supervised-session mapping: head i is class ``class_ids[i]``."""
    return ClusterMapping(tuple((i, int(g), session) for i, g in enumerate(class_ids)))


def map_clusters(
    predictions: np.ndarray,
    truth: np.ndarray,
    mapping: ClusterMapping,
    session: int,
) -> ClusterMapping:
    """Extend the mapping with this session's heads by maximum overlap.

    ``predictions`` are global head indices on the session's own
    training data and ``truth`` the hidden labels. When more heads than
    true classes exist, the surplus heads stay unmapped and their
    predictions score as errors.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if predictions.shape != truth.shape:
        raise MappingError("predictions and truth must align")
    heads = np.unique(predictions)
    classes = np.unique(truth)
    already = mapping.class_ids() & set(int(c) for c in classes)
    if already:
        raise MappingError(f"classes {sorted(already)} were already mapped in an earlier session")
    mapped_heads = set(mapping.head_to_class()) & set(int(h) for h in heads)
    if mapped_heads:
        raise MappingError(f"heads {sorted(mapped_heads)} were already mapped")

    contingency = np.zeros((heads.size, classes.size))
    head_pos = {int(h): i for i, h in enumerate(heads)}
    class_pos = {int(c): i for i, c in enumerate(classes)}
    for h, c in zip(predictions, truth):
        contingency[head_pos[int(h)], class_pos[int(c)]] += 1

    pairs = hungarian(-contingency)
    new_entries = [(int(heads[r]), int(classes[c]), session) for r, c in pairs]
    return mapping.with_entries(new_entries)


def pseudo_label_accuracy(
    predictions: np.ndarray, truth: np.ndarray, mapping: ClusterMapping
) -> float:
    """Percentage of rows whose mapped head equals the hidden label."""
    mapped = mapping.apply(np.asarray(predictions))
    return float((mapped == np.asarray(truth)).mean() * 100.0)


@dataclass(frozen=True)
class SessionRecord:
    session: int
    class_count: int
    estimated_count: Optional[int]
    pseudo_label_acc: Optional[float]
    test_acc: float


@dataclass(frozen=True)
class MetricsReport:
    """Joint-test accuracies: overall, base classes, discovered classes."""

    last_acc: float
    old_acc: float
    new_acc: float
    n_old: int
    n_new: int
    sessions: tuple[SessionRecord, ...] = ()

    def render_text(self) -> str:
        lines = []
        for rec in self.sessions:
            parts = [f"session {rec.session}", f"classes {rec.class_count}"]
            if rec.estimated_count is not None:
                parts.append(f"estimated {rec.estimated_count}")
            if rec.pseudo_label_acc is not None:
                parts.append(f"pseudo-label-acc {rec.pseudo_label_acc:.1f}")
            parts.append(f"test-acc {rec.test_acc:.1f}")
            lines.append("  ".join(parts))
        lines.append(
            f"final  last {self.last_acc:.1f}  old {self.old_acc:.1f}  new {self.new_acc:.1f}"
        )
        return "\n".join(lines) + "\n"

    def render_table(self) -> str:
        """Flat tab-separated table, one row per session plus a final row."""
        rows = ["session\tclasses\testimated\tpseudo_label_acc\ttest_acc"]
        for rec in self.sessions:
            est = "" if rec.estimated_count is None else str(rec.estimated_count)
            pl = "" if rec.pseudo_label_acc is None else f"{rec.pseudo_label_acc:.1f}"
            rows.append(f"{rec.session}\t{rec.class_count}\t{est}\t{pl}\t{rec.test_acc:.1f}")
        rows.append(f"final\t\t\t\t{self.last_acc:.1f}")
        rows.append(f"old\t\t\t\t{self.old_acc:.1f}")
        rows.append(f"new\t\t\t\t{self.new_acc:.1f}")
        return "\n".join(rows) + "\n"


def evaluate(
    head: LinearHead,
    mapping: ClusterMapping,
    test: EmbeddingSet,
    old_class_set: set[int],
    sessions: tuple[SessionRecord, ...] = (),
) -> MetricsReport:
    """Task-agnostic joint-test evaluation through the frozen mapping."""
    truth = test.require_labels().astype(np.int64)
    predicted = mapping.apply(predict(head, test.data.astype(np.float64)))
    correct = predicted == truth
    old_mask = np.isin(truth, sorted(old_class_set))
    new_mask = ~old_mask
    n_old = int(old_mask.sum())
    n_new = int(new_mask.sum())
    old_acc = float(correct[old_mask].mean() * 100.0) if n_old else 0.0
    new_acc = float(correct[new_mask].mean() * 100.0) if n_new else 0.0
    return MetricsReport(
        last_acc=float(correct.mean() * 100.0),
        old_acc=old_acc,
        new_acc=new_acc,
        n_old=n_old,
        n_new=n_new,
        sessions=sessions,
    )


def matched_accuracy(cluster_labels: np.ndarray, truth: np.ndarray) -> float:
    """Best-case accuracy of a clustering against labels (max-overlap match)."""
    cluster_labels = np.asarray(cluster_labels, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    mapping = map_clusters(cluster_labels, truth, ClusterMapping(), session=0)
    return pseudo_label_accuracy(cluster_labels, truth, mapping)


def kmeans_acc_probe(data: EmbeddingSet, seed: int) -> float:
    """Cluster with k = number of distinct labels, then score the
    max-overlap match; a representation-quality probe."""
    truth = data.require_labels()
    k = int(np.unique(truth).size)
    assignment = kmeans(data, k, seed=seed)
    return matched_accuracy(assignment.labels, truth)


def linear_probe(train: EmbeddingSet, test: EmbeddingSet, cfg: TrainConfig) -> float:
    """Accuracy of a fresh linear head fit with plain cross-entropy on
    ``train`` and scored on ``test``; classes absent from train count as
    errors."""
    train_truth = train.require_labels()
    test_truth = test.require_labels()
    classes = np.unique(train_truth)
    index_of = {int(c): i for i, c in enumerate(classes)}
    compact = np.array([index_of[int(c)] for c in train_truth], dtype=np.int64)

    missing = set(int(c) for c in np.unique(test_truth)) - set(index_of)
    if missing:
        logger.warning("test classes absent from probe train set: %s", sorted(missing))

    cfg = replace(cfg, logit_norm=False)
    features = l2_rows(train.data)
    head = LinearHead.initialize(classes.size, train.dim, seed=cfg.seed)
    head = train_head(head, features, compact, cfg)
    predicted = classes[predict(head, l2_rows(test.data))]
    return float((predicted == test_truth).mean() * 100.0)
