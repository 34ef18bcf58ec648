"""Confusion counts and the overlap metrics derived from them."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict

import numpy as np

from ..errors import UsageError

CLASS_VIEWS = {"BV": (1,), "MAT": (2,), "all": (1, 2)}


@dataclass(frozen=True)
class Counts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


def binary_counts(pred, gt) -> Counts:
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise UsageError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    return Counts(tp, fp, pred.size - tp - fp - fn, fn)


def confusion_counts(pred, gt) -> Dict[str, Counts]:
    """One-vs-rest counts for BV and MAT plus the merged entire-vessel view."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise UsageError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    return {view: binary_counts(np.isin(pred, cls), np.isin(gt, cls))
            for view, cls in CLASS_VIEWS.items()}


def _ratio(num, den, empty):
    if den == 0:
        return Fraction(1) if empty else Fraction(0)
    return Fraction(num, den)


def scalar_metrics_exact(c: Counts) -> Dict[str, Fraction]:
    """Metrics as exact fractions. A class absent from both maps scores 1."""
    empty = c.tp == 0 and c.fp == 0 and c.fn == 0
    return {
        "jac": _ratio(c.tp, c.tp + c.fp + c.fn, empty),
        "dice": _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, empty),
        "sen": _ratio(c.tp, c.tp + c.fn, empty),
        "pre": _ratio(c.tp, c.tp + c.fp, empty),
    }


def scalar_metrics(c: Counts) -> Dict[str, float]:
    return {k: float(v) for k, v in scalar_metrics_exact(c).items()}
