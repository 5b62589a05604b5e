"""SCED loss family and CAREF composite objective, C++ core."""

from caref._core import (
    PROB_FLOOR,
    DivergenceError,
    __version__,
    caref_grad,
    caref_loss,
    cross_entropy,
    effective_support,
    entropy,
    entropy_penalty,
    gradient_audit,
    kl_uniform,
    label_smoothing_ce,
    log_softmax,
    schedule_lr,
    sced,
    softmax,
    sparsemax,
    topk_mass,
    train_toy,
    validate,
)

__all__ = [
    "PROB_FLOOR",
    "DivergenceError",
    "__version__",
    "caref_grad",
    "caref_loss",
    "cross_entropy",
    "effective_support",
    "entropy",
    "entropy_penalty",
    "gradient_audit",
    "kl_uniform",
    "label_smoothing_ce",
    "log_softmax",
    "schedule_lr",
    "sced",
    "softmax",
    "sparsemax",
    "topk_mass",
    "train_toy",
    "validate",
]
