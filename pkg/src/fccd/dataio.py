"""Embedding containers, session manifests, and benchmark configuration.

Container layout (little-endian, bit-exact):

    magic   4 bytes  b"FCCD"
    version u16      1
    flags   u16      bit 0 = labels present (other bits must be zero)
    count   u64      N
    dim     u32      D
    padding u32      0
    data    N*D float32, row-major
    labels  N int32  (only when flag bit 0 is set)

Labels are class IDs >= 0; -1 marks an unlabeled row inside a labeled
file, so mixed files need no second format.

A manifest is a JSON document with keys ``sessions`` (ordered list of
``{path, labeled, class_count}``), ``seed``, ``test`` (joint test
container) and ``options``; see the README for the full grammar.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

MAGIC = b"FCCD"
VERSION = 1
FLAG_LABELS = 0x0001

_HEADER = struct.Struct("<4sHHQLL")
HEADER_SIZE = _HEADER.size  # 24


class ContainerError(ValueError):
    """Malformed embedding container; ``offset`` is the offending byte."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ManifestError(ValueError):
    """Invalid session manifest."""


@dataclass(frozen=True)
class EmbeddingSet:
    """N x D float32 feature matrix with optional integer labels."""

    data: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"data must be a non-empty 2-D matrix, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("data contains non-finite values")
        object.__setattr__(self, "data", data)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int32)
            if labels.shape != (data.shape[0],):
                raise ValueError(f"labels must have length {data.shape[0]}, got shape {labels.shape}")
            if (labels < -1).any():
                raise ValueError("labels must be >= 0 (or -1 for an unlabeled row)")
            object.__setattr__(self, "labels", labels)

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def require_labels(self) -> np.ndarray:
        """Labels with every row labeled, or raise."""
        if self.labels is None:
            raise ValueError("embedding set has no labels")
        if (self.labels < 0).any():
            raise ValueError("embedding set contains unlabeled rows")
        return self.labels

    def without_labels(self) -> "EmbeddingSet":
        return EmbeddingSet(self.data) if self.labels is not None else self

    def normalized(self) -> "EmbeddingSet":
        """Rows scaled to unit L2 norm (zero rows are left untouched)."""
        norms = np.linalg.norm(self.data.astype(np.float64), axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return EmbeddingSet((self.data / norms).astype(np.float32), self.labels)


def write_embedding_container(emb: EmbeddingSet, path) -> None:
    """Write ``emb`` so that :func:`read_embedding_container` round-trips it bit-for-bit."""
    flags = FLAG_LABELS if emb.labels is not None else 0
    header = _HEADER.pack(MAGIC, VERSION, flags, emb.count, emb.dim, 0)
    payload = np.ascontiguousarray(emb.data, dtype="<f4").tobytes()
    blob = header + payload
    if emb.labels is not None:
        blob += np.ascontiguousarray(emb.labels, dtype="<i4").tobytes()
    Path(path).write_bytes(blob)


def read_embedding_container(path) -> EmbeddingSet:
    """Decode a container file, rejecting any structural violation."""
    blob = Path(path).read_bytes()
    if len(blob) < HEADER_SIZE:
        raise ContainerError(f"file too short for header ({len(blob)} bytes)", len(blob))
    magic, version, flags, count, dim, padding = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise ContainerError(f"unsupported version {version}", 4)
    if flags & ~FLAG_LABELS:
        raise ContainerError(f"unknown flag bits 0x{flags:04x}", 6)
    if count < 1:
        raise ContainerError("count must be >= 1", 8)
    if dim < 1:
        raise ContainerError("dim must be >= 1", 16)
    if padding != 0:
        raise ContainerError(f"padding must be zero, got {padding}", 20)

    data_bytes = count * dim * 4
    label_bytes = count * 4 if flags & FLAG_LABELS else 0
    expected = HEADER_SIZE + data_bytes + label_bytes
    if len(blob) < expected:
        raise ContainerError(
            f"truncated payload: expected {expected} bytes, got {len(blob)}", len(blob)
        )
    if len(blob) > expected:
        raise ContainerError("trailing bytes after payload", expected)

    data = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=HEADER_SIZE)
    finite = np.isfinite(data)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise ContainerError("non-finite value in data", HEADER_SIZE + bad * 4)
    data = data.reshape(count, dim).copy()

    labels = None
    if flags & FLAG_LABELS:
        labels = np.frombuffer(blob, dtype="<i4", count=count, offset=HEADER_SIZE + data_bytes)
        if (labels < -1).any():
            bad = int(np.flatnonzero(labels < -1)[0])
            raise ContainerError(
                f"label {int(labels[bad])} below -1", HEADER_SIZE + data_bytes + bad * 4
            )
        labels = labels.copy()
    return EmbeddingSet(data, labels)


@dataclass(frozen=True)
class RunOptions:
    """Tunables shared by the discovery pipeline; defaults follow the method."""

    estimate_k: bool = False
    overcluster_factor: int = 3
    replay_per_class: int = 256
    tau: float = 0.1
    epochs: int = 100
    batch_size: int = 128
    lr0: float = 0.1
    normalize: bool = True
    dmin_rule: str = "merge_max"  # or "last_merge" / "survivor_min"

    def __post_init__(self):
        if self.overcluster_factor < 1:
            raise ManifestError("overcluster_factor must be a positive integer")
        if self.replay_per_class < 1:
            raise ManifestError("replay_per_class must be a positive integer")
        if self.tau <= 0:
            raise ManifestError("tau must be positive")
        if self.epochs < 0 or self.batch_size < 1 or self.lr0 < 0:
            raise ManifestError("invalid training options")
        if self.dmin_rule not in ("merge_max", "last_merge", "survivor_min"):
            raise ManifestError(f"unknown dmin_rule {self.dmin_rule!r}")


@dataclass(frozen=True)
class SessionSpec:
    path: str
    labeled: bool
    class_count: Optional[int] = None


@dataclass(frozen=True)
class SessionManifest:
    """Ordered description of a benchmark: one entry per session."""

    sessions: tuple[SessionSpec, ...]
    seed: int = 0
    test: Optional[str] = None
    options: RunOptions = field(default_factory=RunOptions)
    root: Optional[Path] = None  # directory paths are resolved against

    def __post_init__(self):
        if not self.sessions:
            raise ManifestError("manifest has no sessions")
        if self.seed < 0:
            raise ManifestError("seed must be non-negative")
        for i, sess in enumerate(self.sessions):
            if sess.labeled != (i == 0):
                raise ManifestError(
                    "exactly the first session must be labeled; "
                    f"session {i} has labeled={sess.labeled}"
                )
            if sess.class_count is not None and sess.class_count < 1:
                raise ManifestError(f"session {i}: class_count must be positive")
            if not self.options.estimate_k and sess.class_count is None:
                raise ManifestError(
                    f"session {i}: class_count required when estimate_k is false"
                )

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.root is not None:
            return self.root / p
        return p


def load_manifest(path) -> SessionManifest:
    """Parse and validate a JSON manifest, filling option defaults."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ManifestError("manifest must be a JSON object")

    known = {"sessions", "seed", "test", "options"}
    unknown = set(raw) - known
    if unknown:
        raise ManifestError(f"unknown manifest keys: {sorted(unknown)}")
    raw_sessions = raw.get("sessions")
    if not isinstance(raw_sessions, list) or not raw_sessions:
        raise ManifestError("manifest must contain a non-empty 'sessions' list")

    sessions = []
    for i, entry in enumerate(raw_sessions):
        if not isinstance(entry, dict) or "path" not in entry:
            raise ManifestError(f"session {i}: expected an object with a 'path'")
        extra = set(entry) - {"path", "labeled", "class_count"}
        if extra:
            raise ManifestError(f"session {i}: unknown keys {sorted(extra)}")
        sessions.append(
            SessionSpec(
                path=str(entry["path"]),
                labeled=bool(entry.get("labeled", i == 0)),
                class_count=entry.get("class_count"),
            )
        )

    raw_options = raw.get("options", {})
    if not isinstance(raw_options, dict):
        raise ManifestError("'options' must be an object")
    try:
        options = RunOptions(**raw_options)
    except TypeError as exc:
        raise ManifestError(f"invalid options: {exc}") from exc

    return SessionManifest(
        sessions=tuple(sessions),
        seed=int(raw.get("seed", 0)),
        test=raw.get("test"),
        options=options,
        root=path.parent,
    )


def save_manifest(manifest: SessionManifest, path) -> None:
    """Write a manifest as deterministic, hand-editable JSON."""
    doc = {
        "seed": manifest.seed,
        "sessions": [
            {
                "path": s.path,
                "labeled": s.labeled,
                **({"class_count": s.class_count} if s.class_count is not None else {}),
            }
            for s in manifest.sessions
        ],
        "options": {
            "estimate_k": manifest.options.estimate_k,
            "overcluster_factor": manifest.options.overcluster_factor,
            "replay_per_class": manifest.options.replay_per_class,
            "tau": manifest.options.tau,
            "epochs": manifest.options.epochs,
            "batch_size": manifest.options.batch_size,
            "lr0": manifest.options.lr0,
            "normalize": manifest.options.normalize,
            "dmin_rule": manifest.options.dmin_rule,
        },
    }
    if manifest.test is not None:
        doc["test"] = manifest.test
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
