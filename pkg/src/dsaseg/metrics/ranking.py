"""Rank-based ROC AUC."""
from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.stats import rankdata


def auc(scores, gt) -> Optional[float]:
    """Mann-Whitney AUC with midranks for ties.

    Returns ``None`` when ``gt`` holds a single class, since the metric is
    undefined there (it is reported as absent rather than 0).
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=bool).ravel()
    if scores.shape != gt.shape:
        from ..errors import UsageError
        raise UsageError(f"scores {scores.shape} and labels {gt.shape} differ in size")
    n_pos = int(gt.sum())
    n_neg = gt.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores, method="average")
    u = ranks[gt].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
