"""Training-free latent dynamics prediction by similarity search over a
stored dataset of Gaussian latent transitions."""

from .core import (
    SIGMA_FLOOR,
    ContractError,
    DiagGaussian,
    EmptyBatchError,
    LatentDataset,
    Trajectory,
    Transition,
    dataset_from_state_arrays,
    fit_gaussian,
    kl_divergence,
    sample,
)
from .ltd import (
    BadMagicError,
    ChainWarning,
    LtdError,
    ManifestMismatchError,
    RecordInvariantError,
    TruncatedFileError,
    VersionMismatchError,
    load_dataset,
    save_dataset,
)
from .retrieval import (
    ActionMask,
    EmptyRetrievalError,
    TransitionRef,
    scan_time,
    search_kl,
    search_l2,
    search_rollout,
)
from .predictor import (
    EvalSeries,
    Method,
    PredictionStep,
    PredictionTrace,
    evaluate_long_horizon,
    evaluate_one_step,
    predict_step,
    rollout,
)
from .metrics import (
    UndefinedCorrelationError,
    coverage_ratio,
    l1_distance,
    pearson,
    ssim,
)
from .planner import PlanConfig, action_distribution, plan, run_planning_eval
from .synthworld import SynthConfig, WorldState, encode, generate, step, true_next_dist

__version__ = "0.1.0"

__all__ = [
    "ActionMask",
    "BadMagicError",
    "ChainWarning",
    "ContractError",
    "DiagGaussian",
    "EmptyBatchError",
    "EmptyRetrievalError",
    "EvalSeries",
    "LatentDataset",
    "LtdError",
    "ManifestMismatchError",
    "Method",
    "PlanConfig",
    "PredictionStep",
    "PredictionTrace",
    "RecordInvariantError",
    "SIGMA_FLOOR",
    "SynthConfig",
    "Trajectory",
    "Transition",
    "TransitionRef",
    "TruncatedFileError",
    "UndefinedCorrelationError",
    "VersionMismatchError",
    "WorldState",
    "action_distribution",
    "coverage_ratio",
    "dataset_from_state_arrays",
    "encode",
    "evaluate_long_horizon",
    "evaluate_one_step",
    "fit_gaussian",
    "generate",
    "kl_divergence",
    "l1_distance",
    "load_dataset",
    "pearson",
    "plan",
    "predict_step",
    "rollout",
    "run_planning_eval",
    "sample",
    "save_dataset",
    "scan_time",
    "search_kl",
    "search_l2",
    "search_rollout",
    "ssim",
    "step",
    "true_next_dist",
]
