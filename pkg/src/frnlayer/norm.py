"""Forward and backward passes for filter response normalization and the
centered normalizers it is compared against.

Vocabulary:

* A *reduction cell* is the set of activations sharing one normalization
  statistic: the H x W spatial slice per (sample, channel) for FRN and IN,
  spatial x channel-group per sample for GN/GFRN, the whole sample for
  LN/LFRN, and batch x spatial per channel for BN.
* *Uncentered* schemes (FRN, GFRN, LFRN) divide by sqrt(mean(x^2) + eps)
  without subtracting the cell mean; *centered* schemes (IN, BN, GN, LN)
  subtract the cell mean and divide by sqrt(variance + eps).

Each forward is a pure function from (input, parameters, spec) to
(output, context); the context carries exactly what the matching backward
needs (normalized values, per-cell denominators, cell geometry). The only
mutable state anywhere is ``BnState``, which ``bn_forward_train`` updates
in place when asked to track moving statistics.

The input gradient of an uncentered scheme is computed slice-wise as

    dx = (g_hat - xhat * <xhat, g_hat> / N) / denom

which is the projection form of the exact Jacobian without ever
materializing an N x N matrix. Centered schemes additionally subtract the
cell mean of ``g_hat``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, Tensor4, as_tensor4, channel_vector

# Floor added under the absolute value when epsilon is learned.
LEARNED_EPS_FLOOR = 1e-6
# Customary starting point for a learned epsilon.
LEARNED_EPS_INIT = 1e-4
DEFAULT_EPS = 1e-6
DEFAULT_BN_MOMENTUM = 0.99


class ConfigError(ValueError):
    """A normalization spec is internally inconsistent or does not fit the data."""


class UninitializedStateError(RuntimeError):
    """BN inference was requested before any training statistics were recorded."""


class NormKind(enum.Enum):
    FRN = "frn"
    IN = "in"
    BN = "bn"
    GN = "gn"
    LN = "ln"
    GFRN = "gfrn"
    LFRN = "lfrn"
    NONE = "none"


# Schemes that subtract the cell mean before dividing.
CENTERED_KINDS = frozenset({NormKind.IN, NormKind.BN, NormKind.GN, NormKind.LN})
# Schemes whose statistics involve other batch elements.
BATCH_DEPENDENT_KINDS = frozenset({NormKind.BN})
GROUPED_KINDS = frozenset({NormKind.GN, NormKind.GFRN})


@dataclass(frozen=True)
class Fixed:
    """Epsilon held at a fixed non-negative constant."""

    value: float

    def __post_init__(self):
        if not (self.value >= 0.0 and math.isfinite(self.value)):
            raise ConfigError(f"fixed eps must be finite and >= 0, got {self.value}")


@dataclass(frozen=True)
class Learned:
    """Epsilon parameterized as ``LEARNED_EPS_FLOOR + |eps_l|`` with ``eps_l``
    a trained scalar; ``eps_l`` here is its initial value."""

    eps_l: float = LEARNED_EPS_INIT

    def __post_init__(self):
        if not math.isfinite(self.eps_l):
            raise ConfigError(f"learned eps init must be finite, got {self.eps_l}")


EpsPolicy = Fixed | Learned


def effective_eps(policy: EpsPolicy) -> float:
    """Denominator offset produced by an epsilon policy.

    ``Fixed(e)`` yields ``e``; ``Learned(e_l)`` yields
    ``LEARNED_EPS_FLOOR + |e_l|``, which is strictly positive.
    """
    if isinstance(policy, Fixed):
        return policy.value
    if isinstance(policy, Learned):
        return LEARNED_EPS_FLOOR + abs(policy.eps_l)
    raise TypeError(f"not an eps policy: {policy!r}")


@dataclass(frozen=True)
class NormSpec:
    """Tagged description of one normalization scheme."""

    kind: NormKind
    group_size: int | None = None
    eps_policy: EpsPolicy = Fixed(DEFAULT_EPS)
    bn_momentum: float = DEFAULT_BN_MOMENTUM

    def __post_init__(self):
        if self.kind in GROUPED_KINDS:
            if self.group_size is None or self.group_size < 1:
                raise ConfigError(f"{self.kind.value} requires a positive group_size")
        elif self.group_size is not None:
            raise ConfigError(f"group_size is only meaningful for gn/gfrn, "
                              f"not {self.kind.value}")
        if not (0.0 < self.bn_momentum < 1.0):
            raise ConfigError(f"bn_momentum must lie in (0, 1), got {self.bn_momentum}")


@dataclass
class FrnLayerParams:
    """Per-channel learned parameters of one normalization + activation layer.

    ``tau`` is carried here because the layer's activation consumes it; the
    normalization itself only reads ``gamma``, ``beta`` and ``eps_l``.
    """

    gamma: np.ndarray
    beta: np.ndarray
    tau: np.ndarray
    eps_l: float | None = None

    def __post_init__(self):
        c = len(self.gamma)
        self.gamma = channel_vector(self.gamma, c)
        self.beta = channel_vector(self.beta, c)
        self.tau = channel_vector(self.tau, c)
        if self.eps_l is not None and not math.isfinite(self.eps_l):
            raise ConfigError(f"eps_l must be finite, got {self.eps_l}")

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    @classmethod
    def for_channels(cls, channels: int, spec: NormSpec | None = None) -> "FrnLayerParams":
        """Standard initialization: unit scale, zero shift, zero threshold,
        and the policy's initial value when epsilon is learned."""
        eps_l = None
        if spec is not None and isinstance(spec.eps_policy, Learned):
            eps_l = spec.eps_policy.eps_l
        return cls(gamma=np.ones(channels), beta=np.zeros(channels),
                   tau=np.zeros(channels), eps_l=eps_l)


@dataclass
class BnState:
    """Moving statistics used by BN at inference time."""

    moving_mean: np.ndarray
    moving_var: np.ndarray
    momentum: float = DEFAULT_BN_MOMENTUM
    num_updates: int = 0

    @classmethod
    def for_channels(cls, channels: int, momentum: float = DEFAULT_BN_MOMENTUM) -> "BnState":
        return cls(moving_mean=np.zeros(channels), moving_var=np.ones(channels),
                   momentum=momentum)

    @property
    def initialized(self) -> bool:
        return self.num_updates > 0

    def update(self, batch_mean: np.ndarray, batch_var: np.ndarray) -> None:
        m = self.momentum
        self.moving_mean = m * self.moving_mean + (1.0 - m) * batch_mean
        self.moving_var = m * self.moving_var + (1.0 - m) * batch_var
        self.num_updates += 1


@dataclass
class NormContext:
    """Everything the backward pass needs, saved by the forward pass."""

    kind: NormKind
    xhat: Tensor4
    denom: np.ndarray | None   # per-cell sqrt(stat + eps), in cell-view shape
    mu: np.ndarray | None      # per-cell mean, centered schemes only
    cell_size: int
    eps: float
    eps_l: float | None
    view_shape: tuple
    axes: tuple


@dataclass
class NormGrads:
    dx: Tensor4
    dgamma: np.ndarray
    dbeta: np.ndarray
    deps_l: float | None = None


def _resolve_eps(spec: NormSpec, params: FrnLayerParams) -> tuple[float, float | None]:
    """Effective epsilon for this forward call and the live eps_l behind it."""
    if isinstance(spec.eps_policy, Learned):
        if params.eps_l is None:
            raise ConfigError("spec uses a learned eps but params.eps_l is unset")
        return LEARNED_EPS_FLOOR + abs(params.eps_l), params.eps_l
    return spec.eps_policy.value, None


def _cell_view(x: Tensor4, spec: NormSpec):
    """Reshape for per-cell reductions: returns (view, reduced axes, cell size)."""
    b, h, w, c = x.shape
    kind = spec.kind
    if kind in (NormKind.FRN, NormKind.IN):
        return x, (1, 2), h * w
    if kind in GROUPED_KINDS:
        gs = spec.group_size
        if c % gs != 0:
            raise ConfigError(f"channel count {c} is not divisible by "
                              f"group_size {gs}")
        return x.reshape(b, h, w, c // gs, gs), (1, 2, 4), h * w * gs
    if kind in (NormKind.LN, NormKind.LFRN):
        return x, (1, 2, 3), h * w * c
    if kind is NormKind.BN:
        return x, (0, 1, 2), b * h * w
    raise ConfigError(f"no reduction cell for kind {kind}")


def _affine(xhat: Tensor4, params: FrnLayerParams) -> Tensor4:
    c = xhat.shape[3]
    if params.channels != c:
        raise ShapeError(f"params are for {params.channels} channels, tensor has {c}")
    return params.gamma.reshape(1, 1, 1, c) * xhat + params.beta.reshape(1, 1, 1, c)


def _check_input(x) -> Tensor4:
    x = as_tensor4(x)
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("normalization input contains non-finite entries")
    return x


def _forward(x: Tensor4, params: FrnLayerParams, spec: NormSpec) -> tuple[Tensor4, NormContext]:
    x = _check_input(x)
    eps, eps_l = _resolve_eps(spec, params)

    if spec.kind is NormKind.NONE:
        ctx = NormContext(kind=spec.kind, xhat=x, denom=None, mu=None,
                          cell_size=1, eps=eps, eps_l=eps_l,
                          view_shape=x.shape, axes=())
        return _affine(x, params), ctx

    view, axes, n = _cell_view(x, spec)
    centered = spec.kind in CENTERED_KINDS
    if centered:
        mu = view.mean(axis=axes, keepdims=True)
        stat = np.square(view - mu).mean(axis=axes, keepdims=True)
    else:
        mu = None
        stat = np.square(view).mean(axis=axes, keepdims=True)
    if eps == 0.0 and np.any(stat == 0.0):
        raise ZeroDivisionError(
            "eps is 0 and a reduction cell has zero second moment; "
            "normalizing would divide by zero")
    denom = np.sqrt(stat + eps)
    xhat_view = (view - mu) / denom if centered else view / denom
    xhat = xhat_view.reshape(x.shape)
    ctx = NormContext(kind=spec.kind, xhat=xhat, denom=denom, mu=mu,
                      cell_size=n, eps=eps, eps_l=eps_l,
                      view_shape=view.shape, axes=axes)
    return _affine(xhat, params), ctx


def _backward(upstream: Tensor4, ctx: NormContext, params: FrnLayerParams) -> NormGrads:
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != ctx.xhat.shape:
        raise ShapeError(f"upstream shape {g.shape} does not match the saved "
                         f"context shape {ctx.xhat.shape}")
    c = g.shape[3]
    if params.channels != c:
        raise ShapeError(f"params are for {params.channels} channels, tensor has {c}")

    dgamma = (g * ctx.xhat).sum(axis=(0, 1, 2))
    dbeta = g.sum(axis=(0, 1, 2))
    ghat = params.gamma.reshape(1, 1, 1, c) * g

    if ctx.kind is NormKind.NONE:
        deps_l = 0.0 if ctx.eps_l is not None else None
        return NormGrads(dx=ghat, dgamma=dgamma, dbeta=dbeta, deps_l=deps_l)

    gv = ghat.reshape(ctx.view_shape)
    xv = ctx.xhat.reshape(ctx.view_shape)
    proj = (gv * xv).mean(axis=ctx.axes, keepdims=True)
    if ctx.kind in CENTERED_KINDS:
        dxv = (gv - gv.mean(axis=ctx.axes, keepdims=True) - xv * proj) / ctx.denom
    else:
        dxv = (gv - xv * proj) / ctx.denom
    dx = dxv.reshape(ctx.xhat.shape)

    deps_l = None
    if ctx.eps_l is not None:
        # d denom / d eps = 1/(2 denom), hence d xhat / d eps = -xhat/(2 denom^2);
        # proj * N recovers the per-cell inner product <ghat, xhat>.
        deps = float(-(proj * ctx.cell_size / (2.0 * np.square(ctx.denom))).sum())
        deps_l = float(np.sign(ctx.eps_l)) * deps
    return NormGrads(dx=dx, dgamma=dgamma, dbeta=dbeta, deps_l=deps_l)


def _expect_kind(spec_or_ctx, kind: NormKind, fn: str) -> None:
    actual = spec_or_ctx.kind
    if actual is not kind:
        raise ConfigError(f"{fn} called with a {actual.value} spec/context")


# Scheme-specific entry points. Forward returns (y, ctx); backward consumes
# the ctx of the matching forward.

def frn_forward(x, params: FrnLayerParams, spec: NormSpec):
    """Divide each (sample, channel) spatial slice by the root of its mean
    squared activation plus eps, then apply the per-channel affine. No mean
    is subtracted."""
    _expect_kind(spec, NormKind.FRN, "frn_forward")
    return _forward(x, params, spec)


def frn_backward(upstream, ctx: NormContext, params: FrnLayerParams) -> NormGrads:
    _expect_kind(ctx, NormKind.FRN, "frn_backward")
    return _backward(upstream, ctx, params)


def in_forward(x, params: FrnLayerParams, spec: NormSpec):
    """Instance normalization: center and scale each (sample, channel)
    spatial slice by its own mean and variance."""
    _expect_kind(spec, NormKind.IN, "in_forward")
    return _forward(x, params, spec)


def in_backward(upstream, ctx, params) -> NormGrads:
    _expect_kind(ctx, NormKind.IN, "in_backward")
    return _backward(upstream, ctx, params)


def gn_forward(x, params: FrnLayerParams, spec: NormSpec):
    """Group normalization over consecutive channel groups of size
    ``spec.group_size``; affine stays per-channel."""
    _expect_kind(spec, NormKind.GN, "gn_forward")
    return _forward(x, params, spec)


def gn_backward(upstream, ctx, params) -> NormGrads:
    _expect_kind(ctx, NormKind.GN, "gn_backward")
    return _backward(upstream, ctx, params)


def ln_forward(x, params: FrnLayerParams, spec: NormSpec):
    """Layer normalization: one centered cell per sample spanning all
    spatial positions and channels."""
    _expect_kind(spec, NormKind.LN, "ln_forward")
    return _forward(x, params, spec)


def ln_backward(upstream, ctx, params) -> NormGrads:
    _expect_kind(ctx, NormKind.LN, "ln_backward")
    return _backward(upstream, ctx, params)


def gfrn_forward(x, params: FrnLayerParams, spec: NormSpec):
    """Group-extent variant of FRN: GN's reduction cells, but dividing by
    the uncentered second moment with no mean subtraction."""
    _expect_kind(spec, NormKind.GFRN, "gfrn_forward")
    return _forward(x, params, spec)


def gfrn_backward(upstream, ctx, params) -> NormGrads:
    _expect_kind(ctx, NormKind.GFRN, "gfrn_backward")
    return _backward(upstream, ctx, params)


def lfrn_forward(x, params: FrnLayerParams, spec: NormSpec):
    """Layer-extent variant of FRN: LN's reduction cells, uncentered."""
    _expect_kind(spec, NormKind.LFRN, "lfrn_forward")
    return _forward(x, params, spec)


def lfrn_backward(upstream, ctx, params) -> NormGrads:
    _expect_kind(ctx, NormKind.LFRN, "lfrn_backward")
    return _backward(upstream, ctx, params)


def identity_forward(x, params: FrnLayerParams, spec: NormSpec):
    """No normalization; the per-channel affine is still applied so that
    unnormalized baselines share the same parameter surface."""
    _expect_kind(spec, NormKind.NONE, "identity_forward")
    return _forward(x, params, spec)


def identity_backward(upstream, ctx, params) -> NormGrads:
    _expect_kind(ctx, NormKind.NONE, "identity_backward")
    return _backward(upstream, ctx, params)


def bn_forward_train(x, params: FrnLayerParams, spec: NormSpec,
                     state: BnState | None = None):
    """Batch normalization using statistics of the current mini-batch.

    When ``state`` is given, its moving statistics are folded toward the
    batch statistics as ``moving <- momentum * moving + (1 - momentum) * batch``.
    The returned context yields the exact train-mode gradient, including the
    dependence of the batch statistics on the input.
    """
    _expect_kind(spec, NormKind.BN, "bn_forward_train")
    y, ctx = _forward(x, params, spec)
    if state is not None:
        batch_mean = ctx.mu.reshape(-1)
        batch_var = (np.square(ctx.denom).reshape(-1) - ctx.eps)
        state.update(batch_mean, batch_var)
    return y, ctx


def bn_forward_eval(x, params: FrnLayerParams, spec: NormSpec, state: BnState) -> Tensor4:
    """Batch normalization in inference mode, normalizing with the moving
    statistics accumulated during training. Returns the output only; the
    inference path has no backward."""
    _expect_kind(spec, NormKind.BN, "bn_forward_eval")
    if not state.initialized:
        raise UninitializedStateError(
            "bn_forward_eval called before any training-mode statistics update")
    x = _check_input(x)
    eps, _ = _resolve_eps(spec, params)
    c = x.shape[3]
    xhat = (x - state.moving_mean.reshape(1, 1, 1, c)) / np.sqrt(
        state.moving_var.reshape(1, 1, 1, c) + eps)
    return _affine(xhat, params)


def bn_backward(upstream, ctx, params) -> NormGrads:
    _expect_kind(ctx, NormKind.BN, "bn_backward")
    return _backward(upstream, ctx, params)


def norm_forward(x, params: FrnLayerParams, spec: NormSpec,
                 state: BnState | None = None, training: bool = True):
    """Dispatch to the forward pass for ``spec.kind``.

    For BN in eval mode this returns ``(y, None)``: there is no backward
    context on the inference path.
    """
    if spec.kind is NormKind.BN:
        if training:
            return bn_forward_train(x, params, spec, state)
        if state is None:
            raise UninitializedStateError("BN eval mode requires a BnState")
        return bn_forward_eval(x, params, spec, state), None
    return _forward(x, params, spec)


def norm_backward(upstream, ctx: NormContext, params: FrnLayerParams) -> NormGrads:
    """Backward pass matching any ``norm_forward`` training-mode context."""
    return _backward(upstream, ctx, params)


def frn_scalar(x: float, eps: float) -> float:
    """Single-activation normalization ``x / sqrt(x^2 + eps)``.

    This is the cell-size-1 regime: for tiny eps it approaches sign(x), for
    larger eps it is a smooth softsign-like curve.
    """
    if eps < 0.0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    if x == 0.0 and eps == 0.0:
        raise ZeroDivisionError("0 / sqrt(0) is undefined; need x != 0 or eps > 0")
    return x / math.sqrt(x * x + eps)
