"""Embedding-space continual learning with Gaussian prototypes and synthetic replay.

The package keeps no raw features of past classes: each class is frozen
into a Gaussian prototype (mean and covariance, possibly rank-reduced)
right after its session, and later sessions train against synthetic
features drawn from those prototypes, screened by the previous classifier.
Few-shot sessions can additionally inflate their real rows into full
training pools by sampling around the shots and rejecting candidates that
sit too close to other classes.
"""

from .benchmark import BenchSpec, generate, nearest_mean_oracle
from .checkpoint import load_state, save_state
from .classifier import (
    LinearClassifier,
    TrainConfig,
    expand_head,
    loss_and_grad,
    train,
)
from .errors import (
    DimensionMismatch,
    DuplicateLabel,
    EmptyInput,
    EmptyTestSet,
    InfeasibleSpec,
    InsufficientShots,
    NonFiniteError,
    ParseError,
    ProtoReplayError,
    SingularCovariance,
    TooFewSessions,
    UnknownLabel,
    ValidationError,
)
from .prototypes import (
    ClassPrototype,
    ComponentReport,
    PrototypeStore,
    fit_prototype,
    mahalanobis,
    mahalanobis_many,
    principal_component_report,
    svd_reduce,
)
from .protocol import (
    MetricsRecord,
    RunReport,
    SessionPlan,
    TrialResult,
    compute_ifm,
    compute_sad,
    evaluate,
    replay_size_sweep,
    run_dfcil,
    run_fscil,
)
from .sampling import (
    SamplerConfig,
    SyntheticBatch,
    filter_by_classifier,
    filter_by_mahalanobis,
    sample_gaussian,
    synthetic_augment,
    synthetic_replay,
)
from .store import (
    DatasetManifest,
    DatasetReader,
    FeatureSet,
    load_manifest,
    read_csv_features,
    read_feature_file,
    write_dataset,
    write_feature_file,
)

__version__ = "0.1.0"

__all__ = [
    "BenchSpec",
    "ClassPrototype",
    "ComponentReport",
    "DatasetManifest",
    "DatasetReader",
    "DimensionMismatch",
    "DuplicateLabel",
    "EmptyInput",
    "EmptyTestSet",
    "FeatureSet",
    "InfeasibleSpec",
    "InsufficientShots",
    "LinearClassifier",
    "MetricsRecord",
    "NonFiniteError",
    "ParseError",
    "ProtoReplayError",
    "PrototypeStore",
    "RunReport",
    "SamplerConfig",
    "SessionPlan",
    "SingularCovariance",
    "SyntheticBatch",
    "TooFewSessions",
    "TrainConfig",
    "TrialResult",
    "UnknownLabel",
    "ValidationError",
    "compute_ifm",
    "compute_sad",
    "evaluate",
    "expand_head",
    "filter_by_classifier",
    "filter_by_mahalanobis",
    "fit_prototype",
    "generate",
    "load_manifest",
    "load_state",
    "loss_and_grad",
    "mahalanobis",
    "mahalanobis_many",
    "nearest_mean_oracle",
    "principal_component_report",
    "read_csv_features",
    "read_feature_file",
    "replay_size_sweep",
    "run_dfcil",
    "run_fscil",
    "sample_gaussian",
    "save_state",
    "svd_reduce",
    "synthetic_augment",
    "synthetic_replay",
    "train",
    "write_dataset",
    "write_feature_file",
]
