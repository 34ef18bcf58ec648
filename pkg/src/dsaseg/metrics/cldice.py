"""Skeletonisation and the centerline Dice (clDice) connectivity metric."""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import UsageError


def skeletonize(mask) -> np.ndarray:
    """Zhang-Suen thinning; returns a bool skeleton of the same shape."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise UsageError(f"skeletonize expects a 2-D mask, got shape {mask.shape}")
    return kernels.zhang_suen(mask).astype(bool)


def _skeleton_or_mask(mask):
    # thinning erases 2x2 blobs entirely; keep the blob so it still counts
    skel = skeletonize(mask)
    if not skel.any() and mask.any():
        return mask.copy()
    return skel


def _topology_ratio(skel, other, other_mask_empty):
    n = np.count_nonzero(skel)
    if n == 0:
        return 1.0 if other_mask_empty else 0.0
    return np.count_nonzero(skel & other) / n


def topology_scores(pred, gt):
    """(topology precision, topology sensitivity)."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise UsageError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    s_pred = _skeleton_or_mask(pred)
    s_gt = _skeleton_or_mask(gt)
    tprec = _topology_ratio(s_pred, gt, not gt.any())
    tsens = _topology_ratio(s_gt, pred, not pred.any())
    return tprec, tsens


def cl_dice(pred, gt) -> float:
    """Harmonic mean of topology precision and sensitivity.

    Both masks empty scores 1.0, matching the empty-class convention of the
    overlap metrics.
    """
    tprec, tsens = topology_scores(pred, gt)
    if tprec + tsens == 0:
        return 0.0
    return 2.0 * tprec * tsens / (tprec + tsens)
