"""Sparse autoencoder training and polysemy (PS-Eval style) evaluation."""

from ._psae import (
    ActivationShard,
    ActivationSpec,
    ConfigError,
    DimensionError,
    Error,
    FormatError,
    SaeConfig,
    SaeModel,
    ShardHeader,
    TrainerConfig,
    compute_metrics,
    cosine_distance,
    evaluate,
    generate_synthetic,
    init_model,
    l0_count,
    lens,
    max_feature,
    mean_max_cosine,
    random_baseline,
    read_checkpoint,
    read_shard,
    train,
    write_checkpoint,
    write_shard,
)

__all__ = [name for name in dir() if not name.startswith("_")]
