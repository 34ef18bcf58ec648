"""Sequence ingestion, preprocessing, augmentation and patching."""
from .augment import AugmentParams, apply_augmentation, augment, sample_params
from .io import (CLASS_NAMES, DsaSequence, LabelMap, MinipImage, load_sequence, read_pgm,
                 save_sequence, write_pgm)
from .patches import PatchGrid, extract_patches, make_grid, mirror_pad, stitch
from .preprocess import (minip, normalize_intensity, normalize_sample, resample_indices,
                         resample_temporal)

__all__ = [
    "AugmentParams", "CLASS_NAMES", "DsaSequence", "LabelMap", "MinipImage", "PatchGrid",
    "apply_augmentation", "augment", "extract_patches", "load_sequence", "make_grid", "minip",
    "mirror_pad", "normalize_intensity", "normalize_sample", "read_pgm", "resample_indices",
    "resample_temporal", "sample_params", "save_sequence", "stitch", "write_pgm",
]
