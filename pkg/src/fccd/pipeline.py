"""Session-by-session discovery driver.

Session 0 is supervised: per-class Gaussians are fitted from the labels,
the classifier head is trained from replayed features, and the merge
threshold is calibrated. Every later session is unlabeled: pseudo-labels
come from k-means (with the class count given or estimated), one
Gaussian per cluster is appended to memory, the head grows and is
retrained from replay over every class seen so far. The representation
is frozen by construction: this component only ever consumes embedding
files, and never re-reads a previous session's data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .classifier import LinearHead, TrainConfig, l2_rows, predict, train_head
from .clustering import calibrate_dmin, estimate_class_count, kmeans
from .dataio import EmbeddingSet, RunOptions, SessionManifest, read_embedding_container
from .evaluation import (
    MetricsReport,
    SessionRecord,
    evaluate,
    identity_mapping,
    map_clusters,
    pseudo_label_accuracy,
)
from .memory import GaussianMemory, fit_gaussians, sample_replay
from .state import RunState, save_run_state

# Per-operation seed stream tags.
_TAG_HEAD, _TAG_TRAIN, _TAG_CALIB, _TAG_KMEANS, _TAG_ESTIMATE, _TAG_REPLAY = range(6)


class PipelineError(RuntimeError):
    """A session failed; the message carries the session index and cause."""


@dataclass(frozen=True)
class AblationFlags:
    """Switches for the ablation study: supervised-adaptation embeddings,
    generative replay, logit normalization."""

    sa: bool = True
    gr: bool = True
    ln: bool = True


@dataclass
class AccessLog:
    """Which files each session touched; the rehearsal-free audit trail."""

    entries: list[tuple[int, str, str]] = field(default_factory=list)

    def record(self, session: int, kind: str, name: str) -> None:
        self.entries.append((session, kind, name))

    def containers_read_during(self, session: int) -> list[str]:
        return [n for s, k, n in self.entries if s == session and k == "container"]

    def render(self) -> str:
        return "".join(f"{s}\t{k}\t{n}\n" for s, k, n in self.entries)


def derive_seed(seed: int, session: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, session, tag]).generate_state(1)[0])


def _train_config(options: RunOptions, flags: AblationFlags, seed: int) -> TrainConfig:
    return TrainConfig(
        tau=options.tau,
        lr0=options.lr0,
        epochs=options.epochs,
        batch_size=options.batch_size,
        seed=seed,
        logit_norm=flags.ln,
    )


def run_session_zero(
    state: RunState,
    base: EmbeddingSet,
    flags: AblationFlags = AblationFlags(),
    options: RunOptions = RunOptions(),
) -> RunState:
    """Supervised session: fit class Gaussians from ground-truth labels,
    train the head from replay, record the identity mapping, calibrate
    the merge threshold."""
    if state.session_cursor != 0:
        raise PipelineError("session 0 requires a fresh run state")
    labels = base.require_labels()
    classes = np.unique(labels)
    if classes.size < 2:
        raise PipelineError("the supervised session needs at least two classes")
    compact = np.searchsorted(classes, labels)

    gaussians = fit_gaussians(base.data, compact, id_offset=0, session=0)
    memory = GaussianMemory(tuple(gaussians))
    head = LinearHead.initialize(
        classes.size, base.dim, seed=derive_seed(state.seed, 0, _TAG_HEAD)
    )
    if flags.gr:
        feats, labs = sample_replay(
            memory, options.replay_per_class, seed=derive_seed(state.seed, 0, _TAG_REPLAY)
        )
        feats = l2_rows(feats)
    else:
        feats, labs = base.data.astype(np.float64), compact
    head = train_head(
        head, feats, labs, _train_config(options, flags, derive_seed(state.seed, 0, _TAG_TRAIN))
    )

    calibration = calibrate_dmin(
        base,
        options.overcluster_factor,
        seed=derive_seed(state.seed, 0, _TAG_CALIB),
        rule=options.dmin_rule,
    )
    return RunState(
        memory=memory,
        head=head,
        mapping=identity_mapping(classes, session=0),
        calibration=calibration,
        session_cursor=1,
        seed=state.seed,
    )


@dataclass(frozen=True)
class NovelSessionInfo:
    session: int
    cluster_count: int
    estimated_count: Optional[int]
    pseudo_label_acc: Optional[float]


def run_novel_session(
    state: RunState,
    novel: EmbeddingSet,
    k: Optional[int] = None,
    flags: AblationFlags = AblationFlags(),
    options: RunOptions = RunOptions(),
) -> tuple[RunState, NovelSessionInfo]:
    """Unlabeled session: cluster, append Gaussians, extend and retrain
    the head, extend the frozen mapping against the hidden labels.

    The discovery path sees a label-stripped view; labels, when present
    in the container, are used only to extend the evaluation mapping.
    """
    if state.session_cursor < 1 or state.head is None:
        raise PipelineError("run_session_zero must come first")
    t = state.session_cursor
    features = novel.without_labels().data.astype(np.float64)
    truth = novel.labels

    estimated = None
    if k is None:
        if state.calibration is None:
            raise PipelineError(f"session {t}: no class count given and no calibration")
        upper = min(
            options.overcluster_factor * state.calibration.source_class_count, novel.count
        )
        k = estimate_class_count(
            features, state.calibration, upper, seed=derive_seed(state.seed, t, _TAG_ESTIMATE)
        )
        estimated = k

    assignment = kmeans(features, k, seed=derive_seed(state.seed, t, _TAG_KMEANS))
    offset = len(state.memory)
    memory = state.memory.extended(
        fit_gaussians(features, assignment.labels, id_offset=offset, session=t)
    )
    head = state.head.extended(k)
    if flags.gr:
        feats, labs = sample_replay(
            memory, options.replay_per_class, seed=derive_seed(state.seed, t, _TAG_REPLAY)
        )
        feats = l2_rows(feats)
    else:
        feats, labs = features, offset + assignment.labels
    head = train_head(
        head, feats, labs, _train_config(options, flags, derive_seed(state.seed, t, _TAG_TRAIN))
    )

    mapping = state.mapping
    pl_acc = None
    if truth is not None and (truth >= 0).all():
        predictions = offset + assignment.labels
        mapping = map_clusters(predictions, truth, mapping, session=t)
        pl_acc = pseudo_label_accuracy(predictions, truth, mapping)

    new_state = RunState(
        memory=memory,
        head=head,
        mapping=mapping,
        calibration=state.calibration,
        session_cursor=t + 1,
        seed=state.seed,
    )
    return new_state, NovelSessionInfo(
        session=t, cluster_count=k, estimated_count=estimated, pseudo_label_acc=pl_acc
    )


def _load(manifest: SessionManifest, name: str, options: RunOptions) -> EmbeddingSet:
    emb = read_embedding_container(manifest.resolve(name))
    return emb.normalized() if options.normalize else emb


def run_benchmark(
    manifest: SessionManifest,
    flags: AblationFlags = AblationFlags(),
    out_dir=None,
    access_log: Optional[AccessLog] = None,
) -> MetricsReport:
    """Run every session in order and evaluate on the joint test set.

    When ``out_dir`` is given, writes per-session state sidecars, the
    metrics report (text and flat table), and the file-access log. The
    output is byte-identical across runs with the same manifest.
    """
    options = manifest.options
    log = access_log if access_log is not None else AccessLog()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    state = RunState.fresh(manifest.seed)
    session_classes: list[set[int]] = []
    infos: list[Optional[NovelSessionInfo]] = []
    for t, sess in enumerate(manifest.sessions):
        try:
            emb = _load(manifest, sess.path, options)
            log.record(t, "container", sess.path)
            if t == 0:
                if sess.class_count is not None:
                    found = int(np.unique(emb.require_labels()).size)
                    if found != sess.class_count:
                        raise PipelineError(
                            f"session 0: manifest says {sess.class_count} base classes, "
                            f"found {found}"
                        )
                state = run_session_zero(state, emb, flags, options)
                infos.append(None)
            else:
                k = None if options.estimate_k else sess.class_count
                state, info = run_novel_session(state, emb, k, flags, options)
                infos.append(info)
            if emb.labels is not None and (emb.labels >= 0).all():
                session_classes.append(set(int(c) for c in np.unique(emb.labels)))
            else:
                session_classes.append(state.mapping.classes_of_session(t))
            if out is not None:
                sidecar = f"state_{t}.fcst"
                save_run_state(state, out / sidecar)
                log.record(t, "sidecar", sidecar)
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(f"session {t}: {exc}") from exc

    if manifest.test is None:
        raise PipelineError("manifest has no joint test container")
    final = len(manifest.sessions)
    test = _load(manifest, manifest.test, options)
    log.record(final, "test", manifest.test)

    records = []
    truth = test.require_labels()
    predicted = state.mapping.apply(predict(state.head, test.data.astype(np.float64)))
    for t, classes in enumerate(session_classes):
        mask = np.isin(truth, sorted(classes))
        acc = float((predicted[mask] == truth[mask]).mean() * 100.0) if mask.any() else 0.0
        info = infos[t]
        records.append(
            SessionRecord(
                session=t,
                class_count=len(classes),
                estimated_count=None if info is None else info.estimated_count,
                pseudo_label_acc=None if info is None else info.pseudo_label_acc,
                test_acc=acc,
            )
        )

    report = evaluate(
        state.head, state.mapping, test, old_class_set=session_classes[0], sessions=tuple(records)
    )
    if out is not None:
        (out / "report.txt").write_text(report.render_text())
        (out / "report.tsv").write_text(report.render_table())
        (out / "access_log.txt").write_text(log.render())
    return report
