"""Linear classification head and baseline classifiers.

The head is the only trainable component after the supervised session.
It is trained on (replayed) feature rows with a logit-normalized
cross-entropy: logits are divided by ``tau * ||H||`` before the softmax,
which makes the loss invariant to the magnitude of the logit vector and
curbs the usual bias toward recently trained classes.

Also provided: nearest-class-mean and Mahalanobis-distance prediction
from Gaussian memory, and a self-labeling trainer that balances its own
pseudo-labels with Sinkhorn-Knopp scaling (used as a baseline for
pseudo-label quality).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .memory import GaussianMemory, ReplayMemoryError

LOGIT_NORM_EPS = 1e-12


class DegenerateLogitsError(ValueError):
    """Logit vector too close to zero for normalization."""


class SinkhornError(RuntimeError):
    """Sinkhorn-Knopp failed to reach the requested marginal tolerance."""

    def __init__(self, iters: int, achieved: float, tol: float):
        super().__init__(
            f"marginals not within {tol} after {iters} iterations (achieved {achieved:.3e})"
        )
        self.achieved = achieved


@dataclass(frozen=True)
class LinearHead:
    """Weights (C, D) and bias (C,) over all classes observed so far."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError(f"inconsistent head shapes {w.shape} / {b.shape}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("head parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def initialize(cls, num_classes: int, dim: int, seed: int, scale: float = 0.1) -> "LinearHead":
        # Scale keeps initial logits at O(0.1) on unit-norm features: small
        # enough to be forgettable, large enough that the 1/||H|| factor in
        # the logit-normalized loss does not blow up the first steps.
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((num_classes, dim)) * scale, np.zeros(num_classes))

    def extended(self, extra_classes: int) -> "LinearHead":
        """Append ``extra_classes`` zero rows; existing rows are untouched."""
        if extra_classes < 1:
            raise ValueError("extra_classes must be >= 1")
        return LinearHead(
            np.vstack([self.weights, np.zeros((extra_classes, self.dim))]),
            np.concatenate([self.bias, np.zeros(extra_classes)]),
        )

    def logits(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.dim:
            raise ValueError(
                f"feature dim {features.shape[-1] if features.ndim else '?'} "
                f"does not match head dim {self.dim}"
            )
        return features @ self.weights.T + self.bias


@dataclass(frozen=True)
class TrainConfig:
    """Head-training settings; temperature and initial lr follow the method."""

    tau: float = 0.1
    lr0: float = 0.1
    epochs: int = 100
    batch_size: int = 128
    schedule: str = "cosine"
    seed: int = 0
    logit_norm: bool = True
    train_bias: bool = True

    def __post_init__(self):
        if self.tau <= 0 or self.lr0 < 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("invalid training configuration")
        if self.schedule != "cosine":
            raise ValueError(f"unknown schedule {self.schedule!r}")

    def lr_at(self, epoch: int) -> float:
        return self.lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / max(1, self.epochs)))


def l2_rows(features: np.ndarray) -> np.ndarray:
    """Rows scaled to unit L2 norm (zero rows left untouched)."""
    features = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return features / norms


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def logit_norm_ce(logits: np.ndarray, target: int, tau: float) -> tuple[float, np.ndarray]:
    """Cross-entropy of softmax(H / (tau * ||H||)) at ``target``.

    Returns the loss and its gradient with respect to the raw logits;
    the gradient accounts for the dependence of ||H|| on them.
    """
    h = np.asarray(logits, dtype=np.float64)
    if h.ndim != 1 or h.size < 2:
        raise ValueError("logits must be a vector over at least two classes")
    if not 0 <= target < h.size:
        raise ValueError(f"target {target} out of range [0, {h.size})")
    losses, grads = _logit_norm_ce_batch(h[None, :], np.array([target]), tau)
    return float(losses[0]), grads[0]


def _logit_norm_ce_batch(
    h: np.ndarray, targets: np.ndarray, tau: float
) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    if (norms < LOGIT_NORM_EPS).any():
        raise DegenerateLogitsError("logit vector norm below 1e-12; normalization undefined")
    z = h / (tau * norms)
    probs = _softmax(z)
    rows = np.arange(h.shape[0])
    losses = -np.log(probs[rows, targets])
    g = probs.copy()
    g[rows, targets] -= 1.0
    unit = h / norms
    radial = (g * unit).sum(axis=1, keepdims=True)
    grads = (g - radial * unit) / (tau * norms)
    return losses, grads


def _plain_ce_batch(h: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    probs = _softmax(h)
    rows = np.arange(h.shape[0])
    losses = -np.log(np.maximum(probs[rows, targets], 1e-300))
    g = probs.copy()
    g[rows, targets] -= 1.0
    return losses, g


def train_head(
    head: LinearHead, features: np.ndarray, labels: np.ndarray, cfg: TrainConfig
) -> LinearHead:
    """Mini-batch gradient descent on the mean per-sample loss.

    Batches are reshuffled every epoch and the learning rate follows a
    cosine decay from ``lr0``. Deterministic given ``cfg.seed``.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min(initial=0) < 0 or labels.max(initial=-1) >= head.num_classes:
        raise ValueError("label out of range for this head")
    if features.shape[0] != labels.shape[0]:
        raise ValueError("features and labels disagree in length")
    if cfg.epochs == 0:
        return head

    w = head.weights.copy()
    b = head.bias.copy()
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(features.shape[0])
        for start in range(0, order.size, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = features[idx], labels[idx]
            logits = xb @ w.T + b
            if cfg.logit_norm:
                _, grad = _logit_norm_ce_batch(logits, yb, cfg.tau)
            else:
                _, grad = _plain_ce_batch(logits, yb)
            grad /= idx.size
            w -= lr * (grad.T @ xb)
            if cfg.train_bias:
                b -= lr * grad.sum(axis=0)
    return LinearHead(w, b)


def predict(head: LinearHead, features: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties go to the lowest class index."""
    return head.logits(features).argmax(axis=1)


def ncm_predict(memory: GaussianMemory, features: np.ndarray) -> np.ndarray:
    """Nearest stored class mean under Euclidean distance."""
    if len(memory) == 0:
        raise ReplayMemoryError("memory is empty")
    labels, _ = _kernels.assign_points(np.asarray(features, dtype=np.float64), memory.means())
    return labels


def mahalanobis_predict(memory: GaussianMemory, features: np.ndarray) -> np.ndarray:
    """Argmin over classes of (x - mu)^T Sigma^{-1} (x - mu)."""
    if len(memory) == 0:
        raise ReplayMemoryError("memory is empty")
    x = np.asarray(features, dtype=np.float64)
    dists = np.empty((x.shape[0], len(memory)))
    for i, entry in enumerate(memory.entries):
        diff = x - entry.mean
        if entry.diagonal:
            dists[:, i] = (diff * diff / entry.cov).sum(axis=1)
        else:
            try:
                chol = np.linalg.cholesky(entry.cov)
            except np.linalg.LinAlgError as exc:
                raise ReplayMemoryError(
                    f"covariance of class {entry.class_id} is singular"
                ) from exc
            solved = np.linalg.solve(chol, diff.T)
            dists[:, i] = (solved * solved).sum(axis=0)
    return dists.argmin(axis=1)


def sinkhorn_pseudolabels(
    predictions: np.ndarray, iters: int = 500, tol: float = 1e-9
) -> np.ndarray:
    """Scale a B x K prediction matrix to uniform marginals.

    Alternates row and column normalization until row sums are within
    ``tol`` of 1/B and column sums within ``tol`` of 1/K. The result is
    the balanced soft pseudo-label matrix (total mass 1).
    """
    p = np.asarray(predictions, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError("predictions must be a B x K matrix")
    b, k = p.shape
    if b < k:
        raise ValueError(f"need at least as many rows as columns, got {b} x {k}")
    if iters < 1:
        raise ValueError("iters must be positive")
    q = np.maximum(p, 1e-30)
    q = q / q.sum()
    row_target = 1.0 / b
    col_target = 1.0 / k
    achieved = np.inf
    for _ in range(iters):
        q *= row_target / q.sum(axis=1, keepdims=True)
        q *= col_target / q.sum(axis=0, keepdims=True)
        achieved = float(np.abs(q.sum(axis=1) - row_target).max())
        if achieved <= tol:
            return q
    raise SinkhornError(iters, achieved, tol)


def train_head_sela(
    head: LinearHead,
    features: np.ndarray,
    cfg: TrainConfig,
    sinkhorn_iters: int = 500,
    sinkhorn_tol: float = 1e-9,
) -> LinearHead:
    """Self-labeling trainer: per epoch, balance the head's own softmax
    predictions into pseudo-labels via Sinkhorn-Knopp, then fit one epoch
    of cross-entropy against them."""
    features = np.asarray(features, dtype=np.float64)
    if cfg.epochs == 0:
        return head
    w = head.weights.copy()
    b = head.bias.copy()
    rng = np.random.default_rng(cfg.seed)
    n = features.shape[0]
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        probs = _softmax(features @ w.T + b)
        q = sinkhorn_pseudolabels(probs, iters=sinkhorn_iters, tol=sinkhorn_tol)
        targets = q * n  # rows sum to 1
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb = features[idx]
            grad = _softmax(xb @ w.T + b) - targets[idx]
            grad /= idx.size
            w -= lr * (grad.T @ xb)
            if cfg.train_bias:
                b -= lr * grad.sum(axis=0)
    return LinearHead(w, b)
