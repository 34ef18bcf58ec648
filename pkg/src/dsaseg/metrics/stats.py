"""Fold statistics: paired t-test and mean/std aggregation."""
from __future__ import annotations

import math
from typing import Dict, List, Mapping, Sequence

import numpy as np
from scipy import stats

from ..errors import DataError, UsageError


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> Dict[str, float]:
    """Two-sided paired t-test. Zero-variance nonzero differences give p = 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise UsageError(f"paired t-test needs equal-length 1-D inputs, got {a.shape}, {b.shape}")
    n = a.size
    if n < 2:
        raise UsageError("paired t-test needs at least two pairs")
    d = a - b
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        if mean == 0.0:
            return {"t": 0.0, "p": 1.0}
        return {"t": math.copysign(math.inf, mean), "p": 0.0}
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * stats.t.sf(abs(t), df=n - 1)
    return {"t": float(t), "p": float(min(1.0, p))}


def flatten_metrics(report: Mapping, prefix: str = "") -> Dict[str, float]:
    """Nested ``{view: {metric: value}}`` -> ``{"view.metric": value}``."""
    out = {}
    for key, val in report.items():
        name = f"{prefix}{key}"
        if isinstance(val, Mapping):
            out.update(flatten_metrics(val, name + "."))
        else:
            out[name] = val
    return out


def aggregate_folds(reports: List[Mapping]) -> Dict[str, Dict[str, float]]:
    """Mean and sample standard deviation of every metric across folds.

    Absent values (``None``) are skipped; a metric absent in every fold stays
    ``None``.
    """
    if not reports:
        raise UsageError("no fold reports to aggregate")
    flat = [flatten_metrics(r) for r in reports]
    keys = list(flat[0])
    for i, f in enumerate(flat[1:], start=1):
        missing = set(keys) ^ set(f)
        if missing:
            raise DataError(f"fold {i} report schema differs at metric(s) {sorted(missing)}")
    summary = {}
    for k in keys:
        vals = [f[k] for f in flat if f[k] is not None]
        if not vals:
            summary[k] = {"mean": None, "std": None}
            continue
        arr = np.asarray(vals, dtype=np.float64)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        summary[k] = {"mean": float(arr.mean()), "std": std}
    return summary
