"""Dense rank-4 activation tensors in batch-height-width-channel layout.

Every activation tensor in this library is a C-contiguous float64 ndarray
of shape ``(B, H, W, C)``; per-channel parameter vectors are 1-D float64
arrays of length ``C``. This module provides construction, validation and
the small set of reductions and elementwise combinators everything else is
built on.

Determinism contract: all operations are plain numpy calls whose reduction
order is fixed by numpy (pairwise summation over the reduced axes), so
re-running any op on identical inputs yields bit-identical output. Random
fills use the PCG64 generator, which produces the same stream for the same
seed on every platform.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

Tensor4 = np.ndarray
Shape4 = tuple[int, int, int, int]


class ShapeError(ValueError):
    """A tensor shape or parameter vector length does not fit the operation."""


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic PCG64 generator for the given 64-bit seed."""
    return np.random.default_rng(np.uint64(seed))


def check_shape(shape) -> Shape4:
    if len(shape) != 4:
        raise ShapeError(f"expected a rank-4 shape (B, H, W, C), got {tuple(shape)}")
    dims = tuple(int(d) for d in shape)
    if any(d < 1 for d in dims):
        raise ShapeError(f"all dimensions must be >= 1, got {dims}")
    return dims


def as_tensor4(x) -> Tensor4:
    """Validate and return ``x`` as a C-contiguous float64 (B, H, W, C) array."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    check_shape(arr.shape)
    return arr


def zeros(shape) -> Tensor4:
    return np.zeros(check_shape(shape), dtype=np.float64)


def full(shape, value: float) -> Tensor4:
    if not np.isfinite(value):
        raise FloatingPointError(f"fill value must be finite, got {value}")
    return np.full(check_shape(shape), float(value), dtype=np.float64)


def random_normal(shape, rng: np.random.Generator, mean: float = 0.0,
                  stddev: float = 1.0) -> Tensor4:
    return rng.normal(mean, stddev, size=check_shape(shape))


def channel_vector(values, channels: int) -> np.ndarray:
    """Validate a per-channel parameter vector of length ``channels``."""
    v = np.ascontiguousarray(values, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != channels:
        raise ShapeError(f"expected a channel vector of length {channels}, "
                         f"got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise FloatingPointError("channel vector contains non-finite entries")
    return v


def reduce_mean_spatial(x: Tensor4) -> np.ndarray:
    """Mean over the spatial axes, returning a (B, C) matrix.

    Entry ``(b, c)`` is the arithmetic mean of ``x[b, :, :, c]``.
    """
    x = as_tensor4(x)
    return x.mean(axis=(1, 2))


def map_elements(x: Tensor4, op: Callable[[np.ndarray], np.ndarray]) -> Tensor4:
    """Apply a vectorized elementwise function, preserving shape."""
    x = as_tensor4(x)
    out = np.asarray(op(x), dtype=np.float64)
    if out.shape != x.shape:
        raise ShapeError(f"elementwise op changed shape {x.shape} -> {out.shape}")
    return out


def zip_elements(a: Tensor4, b: Tensor4,
                 op: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> Tensor4:
    """Combine two same-shape tensors with a vectorized binary function."""
    a = as_tensor4(a)
    b = as_tensor4(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    out = np.asarray(op(a, b), dtype=np.float64)
    if out.shape != a.shape:
        raise ShapeError(f"elementwise op changed shape {a.shape} -> {out.shape}")
    return out


def broadcast_channel(x: Tensor4, v, op) -> Tensor4:
    """Combine ``x`` with a per-channel vector, applying ``v[c]`` at every
    (b, h, w) position of channel ``c``."""
    x = as_tensor4(x)
    v = channel_vector(v, x.shape[3])
    out = np.asarray(op(x, v.reshape(1, 1, 1, -1)), dtype=np.float64)
    if out.shape != x.shape:
        raise ShapeError(f"broadcast op changed shape {x.shape} -> {out.shape}")
    return out
