"""Numerical differentiation oracle for validating analytic backward passes.

The oracle is ordinary central differencing: O(h^2) truncation error, which
with h = 1e-5 and double precision comfortably resolves the default 1e-6
relative tolerance. The scalar loss probed is a weighted sum of the layer
output with fixed random weights; a plain sum would let sign errors that
cancel across elements slip through.

Layers under test are duck-typed. A checkable layer provides:

* ``parameters() -> dict[str, ndarray]``: live parameter arrays, mutated in
  place by the checker and restored afterwards;
* ``forward(x) -> z``: recomputable output for the current parameters;
* ``backward(upstream) -> dict[str, ndarray]``: analytic gradients keyed by
  parameter name plus ``"input"``;
* optionally ``randomize(rng)`` and ``well_conditioned(x) -> bool``, used to
  redraw configurations that land too close to a non-smooth point (e.g. an
  activation tie) or an ill-conditioned denominator, where finite
  differences are meaningless at any tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-6
DEFAULT_ABS_FLOOR = 1e-8


@dataclass
class GradReport:
    """Comparison of one analytic gradient surface against the oracle.

    Coordinates whose absolute error is within ``abs_floor`` are treated as
    exact and contribute zero relative error, so ``passed`` is equivalent to
    ``max_rel_error <= tolerance``.
    """

    name: str
    max_rel_error: float
    max_abs_error: float
    worst_index: int
    passed: bool
    tolerance: float = DEFAULT_TOLERANCE
    abs_floor: float = DEFAULT_ABS_FLOOR


def finite_diff_grad(f: Callable[[np.ndarray], float], at: np.ndarray,
                     step: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    if not step > 0.0:
        raise ValueError(f"step must be positive, got {step}")
    at = np.asarray(at, dtype=np.float64)
    x = at.copy()
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + step
        fp = f(x)
        x[i] = orig - step
        fm = f(x)
        x[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"function evaluated non-finite near "
                                     f"coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * step)
    return grad


def compare_grads(name: str, analytic: np.ndarray, numeric: np.ndarray,
                  tolerance: float = DEFAULT_TOLERANCE,
                  abs_floor: float = DEFAULT_ABS_FLOOR) -> GradReport:
    """Build a GradReport from an analytic/numeric gradient pair."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.shape != n.shape:
        raise ValueError(f"{name}: gradient size mismatch {a.shape} vs {n.shape}")
    err = np.abs(a - n)
    scale = np.maximum(np.abs(a), np.abs(n))
    rel = np.zeros_like(err)
    rough = err > abs_floor
    rel[rough] = err[rough] / scale[rough]
    worst = int(np.argmax(rel)) if rel.size else 0
    max_rel = float(rel[worst]) if rel.size else 0.0
    max_abs = float(err.max()) if err.size else 0.0
    return GradReport(name=name, max_rel_error=max_rel, max_abs_error=max_abs,
                      worst_index=worst, passed=max_rel <= tolerance,
                      tolerance=tolerance, abs_floor=abs_floor)


def _param_grad(layer, name: str, array: np.ndarray, x: np.ndarray,
                weights: np.ndarray, step: float) -> np.ndarray:
    flat = array.reshape(-1)

    def loss_at(v: np.ndarray) -> float:
        flat[:] = v
        z = layer.forward(x)
        return float((weights * z).sum())

    original = flat.copy()
    try:
        return finite_diff_grad(loss_at, original, step)
    finally:
        flat[:] = original


def check_layer(layer, input_shape, rng: np.random.Generator,
                tolerance: float = DEFAULT_TOLERANCE,
                abs_floor: float = DEFAULT_ABS_FLOOR,
                step: float = DEFAULT_STEP,
                max_draws: int = 60) -> list[GradReport]:
    """Check every gradient surface of a layer against central differences.

    Returns one report for the input followed by one per parameter. Draws
    (input and layer parameters) are redrawn up to ``max_draws`` times until
    the layer reports the configuration as well conditioned; everything is
    deterministic in the generator passed in.
    """
    x = None
    for _ in range(max_draws):
        if hasattr(layer, "randomize"):
            layer.randomize(rng)
        candidate = rng.normal(size=input_shape)
        if not hasattr(layer, "well_conditioned") or layer.well_conditioned(candidate):
            x = candidate
            break
    if x is None:
        raise RuntimeError(f"no well-conditioned draw found in {max_draws} attempts")

    z = layer.forward(x)
    weights = rng.normal(size=z.shape)
    analytic = layer.backward(weights)

    def loss_at_input(v: np.ndarray) -> float:
        zz = layer.forward(v.reshape(input_shape))
        return float((weights * zz).sum())

    reports = [compare_grads(
        "input", analytic["input"],
        finite_diff_grad(loss_at_input, x.reshape(-1), step).reshape(input_shape),
        tolerance, abs_floor)]

    for name, array in layer.parameters().items():
        numeric = _param_grad(layer, name, array, x, weights, step)
        reports.append(compare_grads(name, analytic[name], numeric,
                                     tolerance, abs_floor))
    return reports
