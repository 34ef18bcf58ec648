"""Losses and evaluation metrics."""
from .cldice import cl_dice, skeletonize, topology_scores
from .confusion import Counts, binary_counts, confusion_counts, scalar_metrics, scalar_metrics_exact
from .losses import ce_loss, dice_loss, downsample_labels, one_hot, total_loss
from .ranking import auc
from .report import average_reports, build_report, evaluate_image, write_report
from .stats import aggregate_folds, flatten_metrics, paired_t_test

__all__ = [
    "Counts", "aggregate_folds", "auc", "average_reports", "binary_counts", "build_report",
    "ce_loss", "cl_dice", "confusion_counts", "dice_loss", "downsample_labels", "evaluate_image",
    "flatten_metrics", "one_hot", "paired_t_test", "scalar_metrics", "scalar_metrics_exact",
    "skeletonize", "topology_scores", "total_loss", "write_report",
]
