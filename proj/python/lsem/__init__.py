"""Python bindings for the lsem emotion classifier."""

from ._core import (
    LABELS,
    DataError,
    Model,
    ModelError,
    TrainingError,
    attend,
    bce,
    compatibility,
    correlate_logits,
    empirical_correlations,
    gen_synthetic,
    micro_prf,
    randomization_test,
    reg_loss,
    run_cli,
    soft_targets,
    softmax,
    supervised_head,
    threshold_sweep,
    total_loss,
    train,
)

__all__ = [
    "LABELS",
    "DataError",
    "Model",
    "ModelError",
    "TrainingError",
    "attend",
    "bce",
    "compatibility",
    "correlate_logits",
    "empirical_correlations",
    "gen_synthetic",
    "micro_prf",
    "randomization_test",
    "reg_loss",
    "run_cli",
    "soft_targets",
    "softmax",
    "supervised_head",
    "threshold_sweep",
    "total_loss",
    "train",
]
