"""Entity retriever: features, scoring model, training, checkpointing."""

from .features import (
    DEFAULT_DT,
    DEFAULT_HASH_SEED,
    FeatureBundle,
    FeatureConfig,
    char_trigrams,
    embed_text,
    extract_features,
    word_tokens,
)
from .model import (
    PHI_FEATURE_NAMES,
    CorruptCheckpoint,
    ModelError,
    PairAggregates,
    ScoringModel,
    VersionMismatch,
    build_phi_matrix,
    load_checkpoint,
    predict,
    save_checkpoint,
    score_entity,
    softmax,
    top_k,
)
from .training import (
    AdamW,
    EpochStats,
    InsufficientData,
    NonFiniteLoss,
    TrainConfig,
    TrainingReport,
    TrainingSample,
    cross_entropy_loss,
    loss_and_grad,
    train,
)

__all__ = [
    "DEFAULT_DT",
    "DEFAULT_HASH_SEED",
    "FeatureBundle",
    "FeatureConfig",
    "char_trigrams",
    "embed_text",
    "extract_features",
    "word_tokens",
    "PHI_FEATURE_NAMES",
    "CorruptCheckpoint",
    "ModelError",
    "PairAggregates",
    "ScoringModel",
    "VersionMismatch",
    "build_phi_matrix",
    "load_checkpoint",
    "predict",
    "save_checkpoint",
    "score_entity",
    "softmax",
    "top_k",
    "AdamW",
    "EpochStats",
    "InsufficientData",
    "NonFiniteLoss",
    "TrainConfig",
    "TrainingReport",
    "TrainingSample",
    "cross_entropy_loss",
    "loss_and_grad",
    "train",
]
