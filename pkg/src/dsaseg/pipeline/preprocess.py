"""Temporal resampling, MinIP projection and intensity normalisation."""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from ..errors import UsageError
from .io import DsaSequence, MinipImage


def resample_indices(t: int, target_t: int) -> np.ndarray:
    """Nearest-index uniform sampling: ``round(i * (t - 1) / (target_t - 1))``.

    Rounding is half-up. ``target_t == 1`` picks the middle frame.
    """
    if target_t < 1:
        raise UsageError(f"target frame count must be >= 1, got {target_t}")
    if t < 1:
        raise UsageError("sequence has no frames")
    if target_t == 1:
        return np.array([(t - 1) // 2])
    i = np.arange(target_t)
    # exact integer half-up rounding of i*(t-1)/(target_t-1)
    return (2 * i * (t - 1) + (target_t - 1)) // (2 * (target_t - 1))


def resample_temporal(seq: DsaSequence, target_t: int = 8) -> DsaSequence:
    idx = resample_indices(seq.T, target_t)
    return DsaSequence(seq.frames[idx].copy(), seq.source_frame_count, seq.id)


def minip(seq: DsaSequence) -> MinipImage:
    """Per-pixel minimum over frames (vessels are intensity minima)."""
    return MinipImage(seq.frames.min(axis=0), seq.id)


def normalize_intensity(x, stats: Optional[Tuple[float, float]] = None) -> np.ndarray:
    """Per-sample z-score. ``stats=(mean, std)`` overrides the input's own statistics.

    A (near-)constant input maps to zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise UsageError("cannot normalise an empty array")
    mu, sd = stats if stats is not None else (x.mean(), x.std())
    if sd <= 1e-12 * max(1.0, abs(mu)):
        return np.zeros_like(x)
    return (x - mu) / sd


def normalize_sample(frames, minip_pixels) -> Tuple[np.ndarray, np.ndarray]:
    """Normalise frames and MinIP with the MinIP's own mean and std."""
    m = np.asarray(minip_pixels, dtype=np.float64)
    stats = (m.mean(), m.std())
    return normalize_intensity(frames, stats), normalize_intensity(m, stats)
