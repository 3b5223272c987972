"""Training loop: SGD with momentum, cosine warm-up/decay schedules, and
deterministic metrics collection.

A run is a pure function of its TrainConfig: the same config (seed
included) produces bit-identical metrics. Divergence (non-finite loss or
loss above DIVERGENCE_LIMIT) truncates the run and flags the result rather
than raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..activation import ActKind
from ..norm import ConfigError, NormSpec
from ..tensor import make_rng
from .data import Dataset, load_idx, synthetic_dataset
from .layers import ToyNet

DIVERGENCE_LIMIT = 1e4
#: batch size anchoring the linear learning-rate scaling rule
LR_SCALING_BASE_BATCH = 256
LR_SCALING_BASE_RATE = 0.1


def linear_scaled_lr(batch_size: int) -> float:
    """Learning rate growing linearly with batch size, 0.1 at batch 256."""
    return LR_SCALING_BASE_RATE * batch_size / LR_SCALING_BASE_BATCH


def cosine_decay_lr(step: int, total: int, base: float) -> float:
    """Half-cosine decay from ``base`` at step 0 to 0 at ``total``."""
    if not 0 <= step <= total:
        raise ValueError(f"step {step} outside [0, {total}]")
    return base * 0.5 * (1.0 + math.cos(math.pi * step / total))


def cosine_warmup_lr(step: int, warmup: int, base: float) -> float:
    """Half-cosine rise from 0 at step 0 to ``base`` at ``warmup``.

    With ``warmup == 0`` there is no warm-up phase and the value passes
    straight through to the decay schedule.
    """
    if warmup == 0:
        return base
    if not 0 <= step <= warmup:
        raise ValueError(f"step {step} outside [0, {warmup}]")
    return base * 0.5 * (1.0 - math.cos(math.pi * step / warmup))


def scheduled_lr(step: int, total: int, warmup: int, base: float) -> float:
    """Warm-up then decay; both phases meet at ``base`` so the combined
    schedule is continuous at the junction."""
    if not 0 <= warmup <= total:
        raise ValueError(f"warmup {warmup} outside [0, {total}]")
    if step < warmup:
        return cosine_warmup_lr(step, warmup, base)
    return cosine_decay_lr(step - warmup, total - warmup, base)


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             velocity: dict[str, np.ndarray], lr: float, momentum: float,
             weight_decay: float, decayed: frozenset[str] | set[str]) -> None:
    """One momentum-SGD update, in place.

    v <- momentum * v + g (+ weight_decay * w for decayed parameters);
    w <- w - lr * v. Norm and activation parameters are kept out of the
    decayed set so their dynamics are not pulled toward zero.
    """
    for name, w in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}")
        if weight_decay != 0.0 and name in decayed:
            g = g + weight_decay * w
        v = velocity[name]
        v *= momentum
        v += g
        w -= lr * v


@dataclass
class TrainConfig:
    norm: NormSpec
    act: ActKind
    batch_size: int
    total_steps: int
    base_lr: float
    warmup_steps: int = 0
    momentum: float = 0.9
    weight_decay: float = 4e-4
    seed: int = 0
    dataset: str = "synthetic"   # "synthetic" or "idx:IMAGES:LABELS"
    eval_every: int | None = None  # default: ~10 evals per run
    eval_batch: int = 256
    decay_norm_params: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}")
        if not self.base_lr > 0:
            raise ConfigError(f"base_lr must be > 0, got {self.base_lr}")
        if not 0 <= self.warmup_steps <= self.total_steps:
            raise ConfigError(f"warmup_steps {self.warmup_steps} outside "
                              f"[0, {self.total_steps}]")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass
class MetricsRow:
    step: int
    lr: float
    train_loss: float
    train_acc: float
    eval_acc: float | None = None


@dataclass
class TrainResult:
    rows: list[MetricsRow]
    diverged: bool
    final_eval_acc: float | None


def _load_data(config: TrainConfig) -> tuple[Dataset, Dataset]:
    spec = config.dataset
    if spec == "synthetic":
        return synthetic_dataset(config.seed)
    if spec.startswith("idx:"):
        parts = spec.split(":", 2)
        if len(parts) != 3:
            raise ConfigError(f"idx dataset spec must be idx:IMAGES:LABELS, "
                              f"got {spec!r}")
        full = load_idx(parts[1], parts[2])
        # hold out ~20% for eval, deterministically
        n_eval = max(1, len(full) // 5)
        return (Dataset(full.images[n_eval:], full.labels[n_eval:],
                        full.num_classes),
                Dataset(full.images[:n_eval], full.labels[:n_eval],
                        full.num_classes))
    raise ConfigError(f"unknown dataset {spec!r}")


def _evaluate(net: ToyNet, data: Dataset, batch: int) -> float:
    correct = 0
    # runs that are about to be flagged divergent can overflow here too
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, len(data), batch):
            xb = data.images[start:start + batch]
            yb = data.labels[start:start + batch]
            logits = net.forward(xb, training=False)
            correct += int((logits.argmax(axis=1) == yb).sum())
    return correct / len(data)


def train(config: TrainConfig) -> TrainResult:
    """Run one training job; deterministic in ``config.seed``."""
    train_data, eval_data = _load_data(config)
    rng = make_rng(config.seed)
    net = ToyNet(c_in=train_data.images.shape[3],
                 num_classes=train_data.num_classes,
                 norm_spec=config.norm, act_kind=config.act, rng=rng)
    params = net.parameters()
    velocity = {name: np.zeros_like(w) for name, w in params.items()}
    decayed = set(ToyNet.DECAYED)
    if config.decay_norm_params:
        decayed = set(params)

    eval_every = config.eval_every or max(1, config.total_steps // 10)
    n = len(train_data)
    order = rng.permutation(n)
    cursor = 0

    rows: list[MetricsRow] = []
    final_eval = None
    diverged = False
    for step in range(1, config.total_steps + 1):
        if cursor + config.batch_size > n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor:cursor + config.batch_size]
        cursor += config.batch_size
        xb = train_data.images[idx]
        yb = train_data.labels[idx]

        lr = scheduled_lr(step - 1, config.total_steps, config.warmup_steps,
                          config.base_lr)
        try:
            # a diverging run transiently produces inf/nan before the abort
            # below; keep numpy quiet and rely on the explicit checks
            with np.errstate(over="ignore", invalid="ignore"):
                loss, acc, grads = net.loss_and_grads(xb, yb)
        except FloatingPointError:
            rows.append(MetricsRow(step=step, lr=lr, train_loss=math.nan,
                                   train_acc=0.0))
            diverged = True
            break
        row = MetricsRow(step=step, lr=lr, train_loss=loss, train_acc=acc)
        if not math.isfinite(loss) or loss > DIVERGENCE_LIMIT:
            rows.append(row)
            diverged = True
            break
        try:
            sgd_step(params, grads, velocity, lr, config.momentum,
                     config.weight_decay, decayed)
        except FloatingPointError:
            rows.append(row)
            diverged = True
            break
        if step % eval_every == 0 or step == config.total_steps:
            row.eval_acc = _evaluate(net, eval_data, config.eval_batch)
            final_eval = row.eval_acc
        rows.append(row)
    return TrainResult(rows=rows, diverged=diverged, final_eval_acc=final_eval)
