"""Per-image evaluation and the JSON metrics report.

Report schema::

    {
      "BV":  {"jac", "dice", "sen", "pre", "auc"},
      "MAT": {"jac", "dice", "sen", "pre", "auc"},
      "all": {"jac", "dice", "sen", "pre", "auc", "cldice"},
      "n_images": int,
      "folds": [{"fold": k, "n_images": n, "BV": {...}, "MAT": {...}, "all": {...}}, ...],
      "fold_summary": {"all.dice": {"mean", "std"}, ...},
      "p_values": {"all.dice": p, ...}
    }

``auc`` is ``null`` when the ground truth of every image lacks one of the two
classes of that view.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Dict, List, Mapping, Optional

import numpy as np

from .cldice import cl_dice
from .confusion import CLASS_VIEWS, confusion_counts, scalar_metrics
from .ranking import auc
from .stats import flatten_metrics

METRIC_KEYS = ("jac", "dice", "sen", "pre", "auc")
VIEWS = tuple(CLASS_VIEWS)


def evaluate_image(pred, gt, probs: Optional[np.ndarray] = None) -> Dict[str, Dict]:
    """Metrics for one image. ``probs`` is an optional (3, H, W) probability map."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    counts = confusion_counts(pred, gt)
    out = {}
    for view, classes in CLASS_VIEWS.items():
        m = scalar_metrics(counts[view])
        gt_bin = np.isin(gt, classes)
        if probs is not None:
            score = np.sum([probs[k] for k in classes], axis=0)
        else:
            score = np.isin(pred, classes).astype(np.float64)
        m["auc"] = auc(score, gt_bin)
        out[view] = m
    out["all"]["cldice"] = cl_dice(pred > 0, gt > 0)
    return out


def average_reports(reports: List[Mapping]) -> Dict[str, Dict]:
    """Average per-image metrics over images, skipping absent values."""
    out: Dict[str, Dict] = {}
    for view in VIEWS:
        keys = METRIC_KEYS + (("cldice",) if view == "all" else ())
        out[view] = {}
        for k in keys:
            vals = [r[view][k] for r in reports if r[view][k] is not None]
            out[view][k] = float(np.mean(vals)) if vals else None
    return out


def build_report(per_image: List[Mapping], folds: Optional[List[Mapping]] = None,
                 fold_summary: Optional[Mapping] = None,
                 p_values: Optional[Mapping] = None) -> Dict:
    report = dict(average_reports(per_image))
    report["n_images"] = len(per_image)
    report["folds"] = list(folds or [])
    report["fold_summary"] = dict(fold_summary or {})
    report["p_values"] = dict(p_values or {})
    return report


def write_report(report: Mapping, path, csv_path=None):
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=False))
    if csv_path is not None:
        flat = flatten_metrics({v: report[v] for v in VIEWS})
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            for k, v in flat.items():
                w.writerow([k, "" if v is None else v])
