"""Rehearsal-free continual category discovery over frozen embeddings.

The engine consumes per-session embedding containers: the first session
is labeled, later sessions are clustered into pseudo-labels, each
cluster is stored as a Gaussian, and a logit-normalized linear head is
retrained from replayed features after every session. Evaluation maps
discovered clusters to hidden classes with an optimal assignment that is
frozen across sessions.
"""

from ._kernels import BACKEND as kernel_backend
from .classifier import (
    LinearHead,
    TrainConfig,
    logit_norm_ce,
    mahalanobis_predict,
    ncm_predict,
    predict,
    sinkhorn_pseudolabels,
    train_head,
    train_head_sela,
)
from .clustering import (
    ClusterAssignment,
    MergeCalibration,
    agglomerative_merge,
    calibrate_dmin,
    estimate_class_count,
    kmeans,
)
from .dataio import (
    EmbeddingSet,
    SessionManifest,
    load_manifest,
    read_embedding_container,
    write_embedding_container,
)
from .evaluation import (
    ClusterMapping,
    MetricsReport,
    evaluate,
    hungarian,
    kmeans_acc_probe,
    linear_probe,
    map_clusters,
    pseudo_label_accuracy,
)
from .memory import ClusterGaussian, GaussianMemory, fit_gaussians, sample_replay
from .pipeline import (
    AblationFlags,
    run_benchmark,
    run_novel_session,
    run_session_zero,
)
from .state import RunState, load_run_state, save_run_state
from .synth import SyntheticSpec, generate_synthetic_benchmark

__version__ = "0.1.0"

__all__ = [
    "AblationFlags",
    "ClusterAssignment",
    "ClusterGaussian",
    "ClusterMapping",
    "EmbeddingSet",
    "GaussianMemory",
    "LinearHead",
    "MergeCalibration",
    "MetricsReport",
    "RunState",
    "SessionManifest",
    "SyntheticSpec",
    "TrainConfig",
    "agglomerative_merge",
    "calibrate_dmin",
    "estimate_class_count",
    "evaluate",
    "fit_gaussians",
    "generate_synthetic_benchmark",
    "hungarian",
    "kernel_backend",
    "kmeans",
    "kmeans_acc_probe",
    "linear_probe",
    "load_manifest",
    "load_run_state",
    "logit_norm_ce",
    "mahalanobis_predict",
    "map_clusters",
    "ncm_predict",
    "predict",
    "pseudo_label_accuracy",
    "read_embedding_container",
    "run_benchmark",
    "run_novel_session",
    "run_session_zero",
    "sample_replay",
    "save_run_state",
    "sinkhorn_pseudolabels",
    "train_head",
    "train_head_sela",
    "write_embedding_container",
]
