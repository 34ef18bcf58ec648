"""Sliding-window patch extraction with mirror padding, and stitching."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..errors import UsageError


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int
    stride: int
    image_shape: Tuple[int, int]
    canvas_shape: Tuple[int, int]
    pad_before: Tuple[int, int]
    offsets: Tuple[Tuple[int, int], ...]
    padding_mode: str = "mirror"


def _positions(n: int, patch: int, stride: int) -> List[int]:
    if n <= patch:
        return [0]
    count = math.ceil((n - patch) / stride) + 1
    return [i * stride for i in range(count)]


def make_grid(shape, patch: int, stride: int) -> PatchGrid:
    if not patch >= stride >= 1:
        raise UsageError(f"need patch >= stride >= 1, got patch={patch}, stride={stride}")
    h, w = shape
    ys = _positions(h, patch, stride)
    xs = _positions(w, patch, stride)
    ch, cw = ys[-1] + patch, xs[-1] + patch
    pad = ((ch - h) // 2, (cw - w) // 2)
    offsets = tuple((y, x) for y in ys for x in xs)
    return PatchGrid(patch, stride, (h, w), (ch, cw), pad, offsets)


def mirror_pad(img, pad_y: Tuple[int, int], pad_x: Tuple[int, int]) -> np.ndarray:
    """Reflect-pad the last two axes (edge pixel not repeated: [1,2,3] -> [2,1,2,3,2])."""
    img = np.asarray(img)
    lead = [(0, 0)] * (img.ndim - 2)
    h, w = img.shape[-2:]
    mode_y = "reflect" if h > 1 else "edge"
    mode_x = "reflect" if w > 1 else "edge"
    out = np.pad(img, lead + [pad_y, (0, 0)], mode=mode_y)
    return np.pad(out, lead + [(0, 0), pad_x], mode=mode_x)


def extract_patches(image, patch: int, stride: int):
    """Cut ``image`` (..., H, W) into full-size patches.

    Returns the grid and an array of shape (n_patches, ..., patch, patch). A
    sequence (T, H, W) is sliced with the same grid for every frame.
    """
    image = np.asarray(image)
    grid = make_grid(image.shape[-2:], patch, stride)
    h, w = grid.image_shape
    ch, cw = grid.canvas_shape
    py, px = grid.pad_before
    canvas = mirror_pad(image, (py, ch - h - py), (px, cw - w - px))
    patches = np.stack([canvas[..., y:y + patch, x:x + patch] for y, x in grid.offsets])
    return grid, patches


def stitch(grid: PatchGrid, outputs: Sequence[np.ndarray]) -> np.ndarray:
    """Average overlapping patch outputs (..., patch, patch) and crop to the image."""
    if len(outputs) != len(grid.offsets):
        raise UsageError(f"expected {len(grid.offsets)} patch outputs, got {len(outputs)}")
    first = np.asarray(outputs[0])
    lead = first.shape[:-2]
    p = grid.patch_size
    acc = np.zeros(lead + grid.canvas_shape, dtype=np.float64)
    cnt = np.zeros(grid.canvas_shape, dtype=np.float64)
    for (y, x), out in zip(grid.offsets, outputs):
        out = np.asarray(out)
        if out.shape != lead + (p, p):
            raise UsageError(f"patch output shape {out.shape} != {lead + (p, p)}")
        acc[..., y:y + p, x:x + p] += out
        cnt[y:y + p, x:x + p] += 1.0
    full = acc / cnt
    py, px = grid.pad_before
    h, w = grid.image_shape
    return full[..., py:py + h, px:px + w]
