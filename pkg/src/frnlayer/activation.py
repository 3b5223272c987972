"""Pointwise activations built from a two-branch max.

Every kind computes ``z = max(y, alt)`` elementwise where the alternative
branch is 0 (ReLU), a per-channel threshold tau (TLU), a per-channel slope
kappa * y (PReLU), or kappa * y + tau (Affine-TLU). Ties resolve to the
first branch: the forward keeps ``y`` and the gradient flows to ``y``
whenever ``y >= alt``, so the elementwise gradient of the threshold is the
exact complement of the gradient of the input. Upstream gradient therefore
lands on exactly one destination per element, which is what makes the
per-channel threshold "catch" the signal a plain ReLU would drop.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor4, as_tensor4, channel_vector

PRELU_SLOPE_INIT = 0.25


class ActKind(enum.Enum):
    RELU = "relu"
    TLU = "tlu"
    PRELU = "prelu"
    AFFINE_TLU = "affine-tlu"


USES_TAU = frozenset({ActKind.TLU, ActKind.AFFINE_TLU})
USES_KAPPA = frozenset({ActKind.PRELU, ActKind.AFFINE_TLU})


@dataclass
class ActSpec:
    """Activation kind plus the per-channel parameter vectors it consumes.

    Vectors for parameters the kind does not use must be absent. Vectors the
    kind does use may be bound after construction but must be present by the
    time the activation is applied.
    """

    kind: ActKind
    tau: np.ndarray | None = None
    kappa: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in USES_TAU and self.tau is not None:
            raise ValueError(f"{self.kind.value} does not take a tau vector")
        if self.kind not in USES_KAPPA and self.kappa is not None:
            raise ValueError(f"{self.kind.value} does not take a kappa vector")

    def _bound(self, channels: int) -> tuple[np.ndarray | None, np.ndarray | None]:
        tau = kappa = None
        if self.kind in USES_TAU:
            if self.tau is None:
                raise ValueError(f"{self.kind.value} requires a tau vector")
            tau = channel_vector(self.tau, channels)
        if self.kind in USES_KAPPA:
            if self.kappa is None:
                raise ValueError(f"{self.kind.value} requires a kappa vector")
            kappa = channel_vector(self.kappa, channels)
        return tau, kappa

    @classmethod
    def for_channels(cls, kind: ActKind, channels: int,
                     tau_init: float = 0.0,
                     kappa_init: float = PRELU_SLOPE_INIT) -> "ActSpec":
        tau = np.full(channels, tau_init) if kind in USES_TAU else None
        kappa = np.full(channels, kappa_init) if kind in USES_KAPPA else None
        return cls(kind=kind, tau=tau, kappa=kappa)


@dataclass
class ActContext:
    """Per-element record of which branch of the max was taken, plus the
    pre-activation values the parameter gradients are built from."""

    second_branch: np.ndarray  # bool, True where the alternative branch won
    y: Tensor4


@dataclass
class ActGrads:
    dy: Tensor4
    dtau: np.ndarray | None = None
    dkappa: np.ndarray | None = None


def branch_alternative(y, spec: ActSpec) -> np.ndarray:
    """Value of the second max branch at every element (0 for ReLU, tau for
    TLU, kappa*y for PReLU, kappa*y + tau for Affine-TLU)."""
    y = as_tensor4(y)
    c = y.shape[3]
    tau, kappa = spec._bound(c)
    if spec.kind is ActKind.RELU:
        return np.zeros_like(y)
    if spec.kind is ActKind.TLU:
        return np.broadcast_to(tau.reshape(1, 1, 1, c), y.shape)
    if spec.kind is ActKind.PRELU:
        return kappa.reshape(1, 1, 1, c) * y
    return kappa.reshape(1, 1, 1, c) * y + tau.reshape(1, 1, 1, c)


def act_forward(y, spec: ActSpec) -> tuple[Tensor4, ActContext]:
    """Apply the two-branch max elementwise; the context records which branch won."""
    y = as_tensor4(y)
    alt = branch_alternative(y, spec)
    second = alt > y  # ties keep the first branch
    z = np.where(second, alt, y)
    return z, ActContext(second_branch=second, y=y)


def act_backward(upstream, ctx: ActContext, spec: ActSpec) -> ActGrads:
    """Route the upstream gradient to whichever branch each element took.

    First branch: the element passes upstream through to ``dy`` unchanged.
    Second branch: ``dy`` receives ``kappa * upstream`` (zero for ReLU/TLU),
    ``dtau`` collects upstream summed per channel over batch and space, and
    ``dkappa`` collects ``upstream * y`` the same way.
    """
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != ctx.y.shape:
        raise ShapeError(f"upstream shape {g.shape} does not match the saved "
                         f"activation shape {ctx.y.shape}")
    c = g.shape[3]
    tau, kappa = spec._bound(c)
    second = ctx.second_branch
    g_second = np.where(second, g, 0.0)

    if spec.kind in USES_KAPPA:
        dy = np.where(second, kappa.reshape(1, 1, 1, c) * g, g)
        dkappa = (g_second * ctx.y).sum(axis=(0, 1, 2))
    else:
        dy = np.where(second, 0.0, g)
        dkappa = None
    dtau = g_second.sum(axis=(0, 1, 2)) if spec.kind in USES_TAU else None
    return ActGrads(dy=dy, dtau=dtau, dkappa=dkappa)
