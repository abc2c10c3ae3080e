"""Segmentation losses.

The weighted extended dice loss (WEDL) uses squared sums in the denominator
and a class-weight vector:

    L = 1 - sum_i w_i * (2 * sum p*g) / (sum p^2 + sum g^2 + eps)

epsilon sits in the denominator only, so a fully-empty prediction against an
empty target scores a dice term of 0 and the loss tends to 1. The plain
`standard_dice` baseline keeps first-power denominators.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

DEFAULT_EPS = 1e-6


def class_weights(num_classes, spec=None):
    """Weight vector: uniform normalized by default, or parsed from a
    comma-separated string / sequence (not renormalized)."""
    if spec is None:
        return np.full(num_classes, 1.0 / num_classes)
    if isinstance(spec, str):
        parts = [p for p in spec.split(",") if p.strip()]
        w = np.array([float(p) for p in parts])
    else:
        w = np.asarray(spec, dtype=float)
    if w.shape != (num_classes,):
        raise ValueError(
            f"expected {num_classes} class weights, got {w.shape[0] if w.ndim == 1 else w.shape}"
        )
    if np.any(w < 0):
        raise ValueError("class weights must be non-negative")
    return w


def _check_pair(pred, target):
    tshape = target.shape if isinstance(target, Tensor) else np.shape(target)
    if pred.shape != tshape:
        raise ValueError(f"prediction {pred.shape} and target {tshape} differ")


def wedl(pred, target, weights=None, eps=DEFAULT_EPS):
    """Weighted extended dice loss over a (N_c, *spatial) probability map.

    `target` is a one-hot (or soft) array of the same shape. Single-channel
    inputs are treated as one foreground class.
    """
    _check_pair(pred, target)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    if not isinstance(target, Tensor):
        target = Tensor(np.asarray(target, dtype=float))
    nc = pred.shape[0]
    w = class_weights(nc, weights) if not isinstance(weights, np.ndarray) else weights
    if w.shape != (nc,):
        raise ValueError(f"expected {nc} class weights, got {w.shape}")
    axes = tuple(range(1, pred.ndim))
    inter = T.sum_(pred * target, axis=axes)
    denom = T.sum_(pred * pred, axis=axes) + T.sum_(target * target, axis=axes)
    dice = (inter * 2.0) / (denom + eps)
    return 1.0 - T.sum_(dice * Tensor(w))


def standard_dice(pred, target, eps=DEFAULT_EPS):
    """Classic soft dice deficit: first-power denominator sums, epsilon in
    numerator and denominator, averaged over classes."""
    _check_pair(pred, target)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    if not isinstance(target, Tensor):
        target = Tensor(np.asarray(target, dtype=float))
    nc = pred.shape[0]
    axes = tuple(range(1, pred.ndim))
    inter = T.sum_(pred * target, axis=axes)
    denom = T.sum_(pred, axis=axes) + T.sum_(target, axis=axes)
    dice = (inter * 2.0 + eps) / (denom + eps)
    return 1.0 - T.sum_(dice) * (1.0 / nc)


LOSSES = {"wedl": wedl, "dice": standard_dice}
