"""Convolution kernels with a compiled core and a pure-numpy fallback.

The backend is chosen once at import time: the Cython extension when it
compiled successfully, otherwise the numpy implementation. Set the
environment variable ``FRNLAYER_KERNELS`` to ``cython`` or ``numpy`` to
force one (``cython`` raises if the extension is unavailable); the default
is ``auto``. Both backends implement identical contracts and agree to
floating-point noise; each is individually deterministic.
"""

from __future__ import annotations

import os

from . import _conv_py

_CHOICE = os.environ.get("FRNLAYER_KERNELS", "auto").lower()
if _CHOICE not in ("auto", "cython", "numpy"):
    raise ValueError(f"FRNLAYER_KERNELS must be auto, cython or numpy, "
                     f"got {_CHOICE!r}")

_impl = None
if _CHOICE in ("auto", "cython"):
    try:
        from . import _conv_cy as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        if _CHOICE == "cython":
            raise
        _impl = None
if _impl is None:
    _impl = _conv_py
    BACKEND = "numpy"


def available_backends() -> dict[str, object]:
    """Importable backend modules keyed by name."""
    backends: dict[str, object] = {"numpy": _conv_py}
    try:
        from . import _conv_cy
        backends["cython"] = _conv_cy
    except ImportError:
        pass
    return backends


import numpy as _np


def _as_kernel_arg(a):
    return _np.ascontiguousarray(a, dtype=_np.float64)


def conv2d_forward(x, w, stride: int):
    """Valid correlation of x (B, H, W, Ci) with w (KH, KW, Ci, Co)."""
    return _impl.conv2d_forward(_as_kernel_arg(x), _as_kernel_arg(w), stride)


def conv2d_backward_input(grad_out, w, x_shape, stride: int):
    """Gradient w.r.t. the (padded) input of conv2d_forward."""
    return _impl.conv2d_backward_input(_as_kernel_arg(grad_out),
                                       _as_kernel_arg(w), tuple(x_shape), stride)


def conv2d_backward_weights(grad_out, x, kernel_hw, stride: int):
    """Gradient w.r.t. the kernel of conv2d_forward."""
    return _impl.conv2d_backward_weights(_as_kernel_arg(grad_out),
                                         _as_kernel_arg(x), tuple(kernel_hw), stride)
