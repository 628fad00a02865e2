"""Cross-session run state and its binary sidecar format.

A run can be stopped and resumed at any session boundary: the sidecar
stores the Gaussian memory, the classifier head, the frozen
cluster-to-class mapping, the merge calibration, and the cursor. The
encoding is little-endian and versioned, like the embedding container,
and writing the same state twice produces identical bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .classifier import LinearHead
from .clustering import MergeCalibration
from .evaluation import ClusterMapping
from .memory import ClusterGaussian, GaussianMemory

STATE_MAGIC = b"FCST"
STATE_VERSION = 1

class StateFormatError(ValueError):
    """Malformed state sidecar."""


@dataclass(frozen=True)
class RunState:
    """Everything carried between sessions; embeddings are not part of it."""

    memory: GaussianMemory
    head: Optional[LinearHead]
    mapping: ClusterMapping
    calibration: Optional[MergeCalibration]
    session_cursor: int
    seed: int

    def __post_init__(self):
        if self.head is not None and self.head.num_classes != len(self.memory):
            raise ValueError(
                f"head covers {self.head.num_classes} classes but memory holds {len(self.memory)}"
            )

    @classmethod
    def fresh(cls, seed: int) -> "RunState":
        return cls(
            memory=GaussianMemory(),
            head=None,
            mapping=ClusterMapping(),
            calibration=None,
            session_cursor=0,
            seed=seed,
        )


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def pack(self, fmt: str, *values) -> None:
        self.parts.append(struct.pack("<" + fmt, *values))

    def array(self, arr: np.ndarray) -> None:
        self.parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    def blob(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def unpack(self, fmt: str):
        fmt = "<" + fmt
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.blob):
            raise StateFormatError(f"truncated state file at byte {self.pos}")
        out = struct.unpack_from(fmt, self.blob, self.pos)
        self.pos += size
        return out

    def array(self, shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        size = count * 8
        if self.pos + size > len(self.blob):
            raise StateFormatError(f"truncated state file at byte {self.pos}")
        arr = np.frombuffer(self.blob, dtype="<f8", count=count, offset=self.pos)
        self.pos += size
        return arr.reshape(shape).copy()


def save_run_state(state: RunState, path) -> None:
    w = _Writer()
    flags = 0
    if state.calibration is not None:
        flags |= 1
    if state.head is not None:
        flags |= 2
    w.pack("4sHHQL", STATE_MAGIC, STATE_VERSION, flags, state.seed, state.session_cursor)

    if state.calibration is not None:
        w.pack(
            "dLL",
            state.calibration.d_min,
            state.calibration.overcluster_factor,
            state.calibration.source_class_count,
        )

    w.pack("L", len(state.memory))
    for entry in state.memory.entries:
        w.pack("LLQL", entry.class_id, entry.session, entry.n, 1 if entry.diagonal else 0)
        w.pack("L", entry.dim)
        w.array(entry.mean)
        w.array(entry.cov)

    if state.head is not None:
        w.pack("LL", state.head.num_classes, state.head.dim)
        w.array(state.head.weights)
        w.array(state.head.bias)

    w.pack("L", len(state.mapping.entries))
    for head_idx, class_id, session in state.mapping.entries:
        w.pack("LLL", head_idx, class_id, session)

    Path(path).write_bytes(w.blob())


def load_run_state(path) -> RunState:
    r = _Reader(Path(path).read_bytes())
    magic, version, flags, seed, cursor = r.unpack("4sHHQL")
    if magic != STATE_MAGIC:
        raise StateFormatError(f"bad magic {magic!r}")
    if version != STATE_VERSION:
        raise StateFormatError(f"unsupported state version {version}")

    calibration = None
    if flags & 1:
        d_min, factor, source = r.unpack("dLL")
        calibration = MergeCalibration(
            d_min=d_min, overcluster_factor=factor, source_class_count=source
        )

    (n_entries,) = r.unpack("L")
    entries = []
    for _ in range(n_entries):
        class_id, session, n, diag = r.unpack("LLQL")
        (dim,) = r.unpack("L")
        mean = r.array((dim,))
        cov = r.array((dim,) if diag else (dim, dim))
        entries.append(
            ClusterGaussian(class_id=class_id, mean=mean, cov=cov, n=n, session=session)
        )
    memory = GaussianMemory(tuple(entries))

    head = None
    if flags & 2:
        num_classes, dim = r.unpack("LL")
        weights = r.array((num_classes, dim))
        bias = r.array((num_classes,))
        head = LinearHead(weights, bias)

    (n_map,) = r.unpack("L")
    mapping_entries = []
    for _ in range(n_map):
        mapping_entries.append(tuple(int(v) for v in r.unpack("LLL")))
    if r.pos != len(r.blob):
        raise StateFormatError(f"trailing bytes after state payload at {r.pos}")

    return RunState(
        memory=memory,
        head=head,
        mapping=ClusterMapping(tuple(mapping_entries)),
        calibration=calibration,
        session_cursor=cursor,
        seed=seed,
    )
