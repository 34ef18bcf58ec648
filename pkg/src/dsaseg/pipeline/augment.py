"""Training-time augmentation applied jointly to frames, MinIP and label.

Rotation, scaling, mirroring and cropping are geometric and shared by all
three arrays (labels use nearest-neighbour sampling). Gamma only touches
intensities. Elastic deformation is intentionally not provided.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

ROTATION_RANGE = 15.0
SCALE_RANGE = (0.85, 1.15)
GAMMA_RANGE = (0.8, 1.2)
MIRROR_PROB = 0.5


@dataclass
class AugmentParams:
    rotation_deg: float = 0.0
    scale: float = 1.0
    gamma: float = 1.0
    flip_y: bool = False
    flip_x: bool = False
    crop: Optional[Tuple[int, int, int]] = None  # (y0, x0, size)

    @property
    def is_identity(self):
        return (self.rotation_deg == 0.0 and self.scale == 1.0 and self.gamma == 1.0
                and not self.flip_y and not self.flip_x and self.crop is None)


def sample_params(rng: np.random.Generator, shape, crop_size: Optional[int] = None) -> AugmentParams:
    h, w = shape
    crop = None
    if crop_size is not None and (h > crop_size or w > crop_size):
        crop = (int(rng.integers(0, h - crop_size + 1)), int(rng.integers(0, w - crop_size + 1)),
                crop_size)
    return AugmentParams(
        rotation_deg=float(rng.uniform(-ROTATION_RANGE, ROTATION_RANGE)),
        scale=float(rng.uniform(*SCALE_RANGE)),
        gamma=float(rng.uniform(*GAMMA_RANGE)),
        flip_y=bool(rng.random() < MIRROR_PROB),
        flip_x=bool(rng.random() < MIRROR_PROB),
        crop=crop,
    )


def _affine(img, rotation_deg, scale, order, cval):
    h, w = img.shape
    theta = math.radians(rotation_deg)
    # output -> input coordinate map about the image centre
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    mat = rot / scale
    centre = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    offset = centre - mat @ centre
    # reflect for labels too, so no class can appear that was not already present
    return ndimage.affine_transform(img, mat, offset=offset, order=order, mode="reflect", cval=cval)


def apply_augmentation(frames, minip, label, p: AugmentParams):
    """Apply ``p`` to (T, H, W) frames, (H, W) MinIP and (H, W) label."""
    frames = np.asarray(frames, dtype=np.float64)
    minip = np.asarray(minip, dtype=np.float64)
    label = np.asarray(label)
    if p.is_identity:
        return frames.copy(), minip.copy(), label.copy()
    if p.rotation_deg != 0.0 or p.scale != 1.0:
        frames = np.stack([_affine(f, p.rotation_deg, p.scale, 1, 0.0) for f in frames])
        minip = _affine(minip, p.rotation_deg, p.scale, 1, 0.0)
        label = _affine(label.astype(np.float64), p.rotation_deg, p.scale, 0, 0.0)
        label = np.rint(label).astype(np.uint8)
    if p.gamma != 1.0:
        # one intensity window for the whole sample keeps MinIP == min(frames)
        lo = min(frames.min(), minip.min())
        hi = max(frames.max(), minip.max())
        if hi > lo:
            frames = lo + (hi - lo) * ((frames - lo) / (hi - lo)) ** p.gamma
            minip = lo + (hi - lo) * ((minip - lo) / (hi - lo)) ** p.gamma
    if p.flip_y:
        frames, minip, label = frames[:, ::-1], minip[::-1], label[::-1]
    if p.flip_x:
        frames, minip, label = frames[:, :, ::-1], minip[:, ::-1], label[:, ::-1]
    if p.crop is not None:
        y0, x0, s = p.crop
        frames = frames[:, y0:y0 + s, x0:x0 + s]
        minip = minip[y0:y0 + s, x0:x0 + s]
        label = label[y0:y0 + s, x0:x0 + s]
    return (np.ascontiguousarray(frames), np.ascontiguousarray(minip),
            np.ascontiguousarray(label))


def augment(frames, minip, label, seed, crop_size: Optional[int] = None):
    """Draw random parameters from ``seed`` and apply them."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = sample_params(rng, np.asarray(minip).shape, crop_size)
    return apply_augmentation(frames, minip, label, p)
