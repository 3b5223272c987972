"""Network building blocks with explicit forward/backward passes.

Layers here are thin stateful wrappers over the pure functions in
``norm``/``activation`` plus the convolution kernels: each forward stores
exactly the context its backward needs, and parameters live in plain
float64 arrays exposed through ``parameters()`` so the optimizer and the
finite-difference checker can address them uniformly (scalars such as a
learned epsilon are stored as length-1 arrays for that reason).
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..activation import (ActKind, ActSpec, USES_KAPPA, USES_TAU,
                          PRELU_SLOPE_INIT, act_backward, act_forward,
                          branch_alternative)
from ..norm import (BnState, FrnLayerParams, Learned, NormKind, NormSpec,
                    bn_forward_eval, norm_backward, norm_forward)


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int]:
    """(before, after) padding so the output covers ceil(size / stride)."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    before = total // 2
    return before, total - before


class Conv2d:
    """3x3-style convolution, same padding, no bias (a normalizer follows)."""

    def __init__(self, kernel: int, c_in: int, c_out: int, stride: int,
                 rng: np.random.Generator):
        # He initialization, the usual choice ahead of ReLU-family activations.
        std = np.sqrt(2.0 / (kernel * kernel * c_in))
        self.w = rng.normal(0.0, std, size=(kernel, kernel, c_in, c_out))
        self.stride = stride
        self._xp = None
        self._pads = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        k = self.w.shape[0]
        ph = same_padding(x.shape[1], k, self.stride)
        pw = same_padding(x.shape[2], k, self.stride)
        xp = np.pad(x, ((0, 0), ph, pw, (0, 0)))
        self._xp, self._pads = xp, (ph, pw)
        return kernels.conv2d_forward(xp, self.w, self.stride)

    def backward(self, grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xp, (ph, pw) = self._xp, self._pads
        dw = kernels.conv2d_backward_weights(grad_out, xp, self.w.shape[:2],
                                             self.stride)
        dxp = kernels.conv2d_backward_input(grad_out, self.w, xp.shape,
                                            self.stride)
        dx = dxp[:, ph[0]:dxp.shape[1] - ph[1], pw[0]:dxp.shape[2] - pw[1], :]
        return dx, dw


class NormAct:
    """One normalization + activation stage with a shared parameter surface.

    This is the unit the gradient checker exercises: ``parameters()`` exposes
    live arrays, ``forward``/``backward`` replay deterministically, and
    ``randomize``/``well_conditioned`` let the checker redraw configurations
    that land near an activation tie or an ill-conditioned denominator.
    """

    #: minimum elementwise |y - alternative branch| accepted by the checker
    SMOOTH_MARGIN = 1e-3
    #: minimum accepted squared per-cell denominator (statistic + eps);
    #: below this the curvature of 1/sqrt(stat + eps) makes central
    #: differences lose more than the checking tolerance
    DENOM_FLOOR = 2.5e-2

    def __init__(self, channels: int, norm_spec: NormSpec, act_kind: ActKind,
                 bn_state: BnState | None = None):
        self.channels = channels
        self.norm_spec = norm_spec
        self.act_kind = act_kind
        self.params = FrnLayerParams.for_channels(channels, norm_spec)
        self.kappa = (np.full(channels, PRELU_SLOPE_INIT)
                      if act_kind in USES_KAPPA else None)
        if bn_state is None and norm_spec.kind is NormKind.BN:
            bn_state = BnState.for_channels(channels, norm_spec.bn_momentum)
        self.bn_state = bn_state
        self._eps_l = (np.array([self.params.eps_l])
                       if self.params.eps_l is not None else None)
        self._norm_ctx = None
        self._act_ctx = None

    def _act_spec(self) -> ActSpec:
        return ActSpec(kind=self.act_kind,
                       tau=self.params.tau if self.act_kind in USES_TAU else None,
                       kappa=self.kappa)

    def _live_params(self) -> FrnLayerParams:
        if self._eps_l is not None:
            self.params.eps_l = float(self._eps_l[0])
        return self.params

    def forward(self, x: np.ndarray, training: bool = True) -> np.ndarray:
        params = self._live_params()
        if not training and self.norm_spec.kind is NormKind.BN:
            return self._eval_forward(x, params)
        y, self._norm_ctx = norm_forward(x, params, self.norm_spec,
                                         state=self.bn_state, training=True)
        z, self._act_ctx = act_forward(y, self._act_spec())
        return z

    def _eval_forward(self, x, params) -> np.ndarray:
        y = bn_forward_eval(x, params, self.norm_spec, self.bn_state)
        z, _ = act_forward(y, self._act_spec())
        return z

    def backward(self, upstream: np.ndarray) -> dict[str, np.ndarray]:
        act_grads = act_backward(upstream, self._act_ctx, self._act_spec())
        norm_grads = norm_backward(act_grads.dy, self._norm_ctx, self.params)
        grads: dict[str, np.ndarray] = {
            "input": norm_grads.dx,
            "gamma": norm_grads.dgamma,
            "beta": norm_grads.dbeta,
        }
        if act_grads.dtau is not None:
            grads["tau"] = act_grads.dtau
        if act_grads.dkappa is not None:
            grads["kappa"] = act_grads.dkappa
        if self._eps_l is not None:
            grads["eps_l"] = np.array([norm_grads.deps_l])
        return grads

    def parameters(self) -> dict[str, np.ndarray]:
        out = {"gamma": self.params.gamma, "beta": self.params.beta}
        if self.act_kind in USES_TAU:
            out["tau"] = self.params.tau
        if self.kappa is not None:
            out["kappa"] = self.kappa
        if self._eps_l is not None:
            out["eps_l"] = self._eps_l
        return out

    def randomize(self, rng: np.random.Generator) -> None:
        """Generic parameter draw for gradient checking."""
        c = self.channels
        self.params.gamma[:] = rng.normal(1.0, 0.2, size=c)
        self.params.beta[:] = rng.normal(0.0, 0.5, size=c)
        self.params.tau[:] = rng.normal(0.0, 0.5, size=c)
        if self.kappa is not None:
            self.kappa[:] = rng.normal(PRELU_SLOPE_INIT, 0.1, size=c)

    def well_conditioned(self, x: np.ndarray) -> bool:
        """Reject draws too close to an activation tie or a near-singular
        denominator, where finite differencing is hopeless.

        The denominator screen is skipped for centered single-element cells
        (there the normalized value is structurally zero, which is exact and
        harmless, not an accident of the draw).
        """
        params = self._live_params()
        y, ctx = norm_forward(x, params, self.norm_spec,
                              state=None, training=True)
        if ctx.denom is not None:
            skip = (self.norm_spec.kind in (NormKind.IN, NormKind.BN,
                                            NormKind.GN, NormKind.LN)
                    and ctx.cell_size == 1)
            if not skip and np.any(np.square(ctx.denom) < self.DENOM_FLOOR):
                return False
        alt = branch_alternative(y, self._act_spec())
        return bool(np.all(np.abs(y - alt) >= self.SMOOTH_MARGIN))


class GlobalAvgPool:
    """Mean over the spatial axes: (B, H, W, C) -> (B, C)."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        b, h, w, c = self._shape
        return np.broadcast_to(grad_out.reshape(b, 1, 1, c),
                               self._shape) / (h * w)


class Dense:
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        std = np.sqrt(2.0 / c_in)
        self.w = rng.normal(0.0, std, size=(c_in, c_out))
        self.b = np.zeros(c_out)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.w + self.b

    def backward(self, grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        dw = self._x.T @ grad_out
        db = grad_out.sum(axis=0)
        dx = grad_out @ self.w.T
        return dx, dw, db


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch; returns (loss, dlogits, probs)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    picked = probs[np.arange(n), labels]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits, probs


class ToyNet:
    """Small convolutional classifier used to compare normalizers.

    conv 3x3 (C_in -> 16, stride 1) -> norm+act -> conv 3x3 (16 -> 32,
    stride 2) -> norm+act -> global average pool -> dense -> logits.
    Every norm/act stage uses the single spec pair under test.
    """

    WIDTHS = (16, 32)

    def __init__(self, c_in: int, num_classes: int, norm_spec: NormSpec,
                 act_kind: ActKind, rng: np.random.Generator):
        w1, w2 = self.WIDTHS
        self.conv1 = Conv2d(3, c_in, w1, stride=1, rng=rng)
        self.na1 = NormAct(w1, norm_spec, act_kind)
        self.conv2 = Conv2d(3, w1, w2, stride=2, rng=rng)
        self.na2 = NormAct(w2, norm_spec, act_kind)
        self.pool = GlobalAvgPool()
        self.dense = Dense(w2, num_classes, rng)
        self.norm_spec = norm_spec

    def forward(self, x: np.ndarray, training: bool = True) -> np.ndarray:
        h = self.conv1.forward(x)
        h = self.na1.forward(h, training=training)
        h = self.conv2.forward(h)
        h = self.na2.forward(h, training=training)
        h = self.pool.forward(h)
        return self.dense.forward(h)

    def loss_and_grads(self, x: np.ndarray, labels: np.ndarray):
        """Training-mode forward + full backward; returns (loss, accuracy, grads)."""
        logits = self.forward(x, training=True)
        loss, dlogits, probs = softmax_cross_entropy(logits, labels)
        acc = float((probs.argmax(axis=1) == labels).mean())

        dpool, dw3, db3 = self.dense.backward(dlogits)
        dh = self.pool.backward(dpool)
        na2_grads = self.na2.backward(dh)
        dh, dw2 = self.conv2.backward(na2_grads["input"])
        na1_grads = self.na1.backward(dh)
        _, dw1 = self.conv1.backward(na1_grads["input"])

        grads = {"conv1.w": dw1, "conv2.w": dw2,
                 "dense.w": dw3, "dense.b": db3}
        for prefix, layer_grads in (("na1", na1_grads), ("na2", na2_grads)):
            for name, g in layer_grads.items():
                if name != "input":
                    grads[f"{prefix}.{name}"] = g
        return loss, acc, grads

    def parameters(self) -> dict[str, np.ndarray]:
        out = {"conv1.w": self.conv1.w, "conv2.w": self.conv2.w,
               "dense.w": self.dense.w, "dense.b": self.dense.b}
        for prefix, na in (("na1", self.na1), ("na2", self.na2)):
            for name, arr in na.parameters().items():
                out[f"{prefix}.{name}"] = arr
        return out

    #: parameters subject to weight decay (norm/activation params are not)
    DECAYED = frozenset({"conv1.w", "conv2.w", "dense.w"})
