"""Desk-scale training harness: a small convolutional classifier assembled
from the normalization and activation modules, with SGD + cosine schedules
and deterministic synthetic or IDX-file datasets."""

from .data import (Dataset, IdxFormatError, load_idx, load_idx_images,
                   load_idx_labels, synthetic_dataset)
from .layers import (Conv2d, Dense, GlobalAvgPool, NormAct, ToyNet,
                     same_padding, softmax_cross_entropy)
from .loop import (DIVERGENCE_LIMIT, MetricsRow, TrainConfig, TrainResult,
                   cosine_decay_lr, cosine_warmup_lr, linear_scaled_lr,
                   scheduled_lr, sgd_step, train)

__all__ = [
    "Dataset", "IdxFormatError", "load_idx", "load_idx_images",
    "load_idx_labels", "synthetic_dataset",
    "Conv2d", "Dense", "GlobalAvgPool", "NormAct", "ToyNet",
    "same_padding", "softmax_cross_entropy",
    "DIVERGENCE_LIMIT", "MetricsRow", "TrainConfig", "TrainResult",
    "cosine_decay_lr", "cosine_warmup_lr", "linear_scaled_lr",
    "scheduled_lr", "sgd_step", "train",
]
