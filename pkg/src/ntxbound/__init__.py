"""NT-Xent loss, its alignment/distribution split, and LSE-derived similarity bounds."""

from .bounds import (
    BatchEvaluation,
    BoundReport,
    LseBounds,
    VerifyGrid,
    VerifySummary,
    avg_positive_similarity,
    default_grid,
    evaluate_batch,
    lse_bounds,
    monte_carlo_verify,
    sample_embeddings,
    similarity_bound,
)
from .errors import (
    ConfigError,
    DimensionMismatchError,
    EmptyInputError,
    InvalidDatasetParamsError,
    InvalidGridError,
    InvalidTemperatureError,
    NonFiniteLossError,
    NtxBoundError,
    UnsupportedModeError,
    ZeroVectorError,
)
from .loss import AnchorMode, LossBreakdown, LossConfig, logsumexp, nt_xent, nt_xent_grad
from .sim import EmbeddingBatch, SimilarityMatrix, cosine_sim, l2_normalize, similarity_matrix
from .trainer import (
    AugmentConfig,
    DatasetParams,
    Mlp,
    SimclrModel,
    StepRecord,
    TrainConfig,
    TrainTrace,
    augment,
    forward,
    gen_synthetic,
    train,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "AnchorMode",
    "AugmentConfig",
    "BatchEvaluation",
    "BoundReport",
    "ConfigError",
    "DatasetParams",
    "DimensionMismatchError",
    "EmbeddingBatch",
    "EmptyInputError",
    "InvalidDatasetParamsError",
    "InvalidGridError",
    "InvalidTemperatureError",
    "LossBreakdown",
    "LossConfig",
    "LseBounds",
    "Mlp",
    "NonFiniteLossError",
    "NtxBoundError",
    "SimclrModel",
    "SimilarityMatrix",
    "StepRecord",
    "TrainConfig",
    "TrainTrace",
    "UnsupportedModeError",
    "VerifyGrid",
    "VerifySummary",
    "ZeroVectorError",
    "augment",
    "avg_positive_similarity",
    "cosine_sim",
    "default_grid",
    "evaluate_batch",
    "forward",
    "gen_synthetic",
    "l2_normalize",
    "logsumexp",
    "lse_bounds",
    "monte_carlo_verify",
    "nt_xent",
    "nt_xent_grad",
    "sample_embeddings",
    "similarity_bound",
    "similarity_matrix",
    "train",
    "train_step",
]
