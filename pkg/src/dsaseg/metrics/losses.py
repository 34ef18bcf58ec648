"""Training objectives: cross-entropy, soft Dice and the deep-supervised total."""
from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, as_tensor, ops
from ..errors import DataError, DimensionError

CE_LOG_CLAMP = 1e-12
DICE_EPS = 1e-6
SCALE_WEIGHTS = (1.0, 0.5, 0.25)


def one_hot(target, num_classes: int, dtype=np.float64) -> np.ndarray:
    """(B, H, W) integer labels -> (B, M, H, W) one-hot array."""
    target = np.asarray(target)
    if target.size and (target.min() < 0 or target.max() >= num_classes):
        raise DataError(f"label values must lie in [0, {num_classes - 1}], "
                        f"got range [{target.min()}, {target.max()}]")
    eye = np.eye(num_classes, dtype=dtype)
    return np.ascontiguousarray(np.moveaxis(eye[target.astype(np.int64)], -1, 1))


def _check(pred: Tensor, target):
    target = np.asarray(target)
    if target.ndim == 2:
        target = target[None]
    if pred.ndim != 4 or pred.shape[0] != target.shape[0] or pred.shape[2:] != target.shape[1:]:
        raise DimensionError(f"prediction {pred.shape} does not match target {target.shape}")
    return target


def ce_loss(pred, target, from_logits: bool = True) -> Tensor:
    """Mean pixel cross-entropy; ``pred`` is (B, M, H, W) logits or probabilities."""
    pred = as_tensor(pred)
    target = _check(pred, target)
    y = one_hot(target, pred.shape[1], pred.dtype)
    if from_logits:
        logp = ops.log_softmax(pred, axis=1)
    else:
        logp = ops.log(ops.clamp_min(pred, CE_LOG_CLAMP))
    n = target.size
    return ops.sum(ops.mul(logp, y)) * (-1.0 / n)


def dice_loss(probs, target, eps: float = DICE_EPS) -> Tensor:
    """Soft Dice loss over foreground classes present in the batch.

    Per class: ``1 - 2*sum(p*y) / max(sum(p) + sum(y), eps)``, pooled over the
    batch and averaged over the foreground classes that occur in ``target``
    (all foreground classes when none occur).
    """
    probs = as_tensor(probs)
    target = _check(probs, target)
    m = probs.shape[1]
    y = one_hot(target, m, probs.dtype)
    present = [k for k in range(1, m) if y[:, k].any()] or list(range(1, m))
    losses = []
    for k in present:
        pk = probs[:, k]
        yk = y[:, k]
        inter = ops.sum(ops.mul(pk, yk))
        denom = ops.clamp_min(ops.sum(pk) + float(yk.sum()), eps)
        losses.append(1.0 - 2.0 * inter / denom)
    total = losses[0]
    for extra in losses[1:]:
        total = total + extra
    return total * (1.0 / len(losses))


def downsample_labels(target, factor: int) -> np.ndarray:
    """Nearest-neighbour label downsampling (top-left sample of each block)."""
    target = np.asarray(target)
    return np.ascontiguousarray(target[..., ::factor, ::factor])


def scale_loss(logits, target) -> Tensor:
    probs = ops.softmax(logits, axis=1)
    return ce_loss(logits, target) + dice_loss(probs, target)


def total_loss(output, target) -> Tensor:
    """Deep-supervised loss: sum over scales a=0,1,2 of 2^-a (CE + Dice)."""
    target = np.asarray(target)
    if target.ndim == 2:
        target = target[None]
    total = None
    for a, (logits, weight) in enumerate(zip(output.heads, SCALE_WEIGHTS)):
        term = scale_loss(logits, downsample_labels(target, 2 ** a)) * weight
        total = term if total is None else total + term
    return total
