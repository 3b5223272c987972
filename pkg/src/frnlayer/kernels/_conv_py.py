"""Pure-numpy convolution kernels (fallback backend).

All kernels operate on already-padded inputs and compute valid
correlations only; padding policy lives in the layer above. The kernel
footprint is iterated in Python (at most kh*kw iterations) with the heavy
lifting done by matmul over the channel axes.
"""

from __future__ import annotations

import numpy as np


def conv2d_forward(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    """Valid correlation of x (B, H, W, Ci) with w (KH, KW, Ci, Co)."""
    b, h, wdth, ci = x.shape
    kh, kw, ci_w, co = w.shape
    if ci != ci_w:
        raise ValueError(f"input has {ci} channels but kernel expects {ci_w}")
    oh = (h - kh) // stride + 1
    ow = (wdth - kw) // stride + 1
    out = np.zeros((b, oh, ow, co), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            xs = x[:, i:i + (oh - 1) * stride + 1:stride,
                   j:j + (ow - 1) * stride + 1:stride, :]
            out += xs @ w[i, j]
    return out


def conv2d_backward_input(grad_out: np.ndarray, w: np.ndarray,
                          x_shape: tuple, stride: int) -> np.ndarray:
    """Gradient w.r.t. the (padded) input of conv2d_forward."""
    b, oh, ow, co = grad_out.shape
    kh, kw, ci, co_w = w.shape
    if co != co_w:
        raise ValueError(f"grad has {co} channels but kernel produces {co_w}")
    dx = np.zeros(x_shape, dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            dx[:, i:i + (oh - 1) * stride + 1:stride,
               j:j + (ow - 1) * stride + 1:stride, :] += grad_out @ w[i, j].T
    return dx


def conv2d_backward_weights(grad_out: np.ndarray, x: np.ndarray,
                            kernel_hw: tuple, stride: int) -> np.ndarray:
    """Gradient w.r.t. the kernel of conv2d_forward."""
    b, oh, ow, co = grad_out.shape
    kh, kw = kernel_hw
    ci = x.shape[3]
    dw = np.zeros((kh, kw, ci, co), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            xs = x[:, i:i + (oh - 1) * stride + 1:stride,
                   j:j + (ow - 1) * stride + 1:stride, :]
            dw[i, j] = np.tensordot(xs, grad_out, axes=([0, 1, 2], [0, 1, 2]))
    return dw
