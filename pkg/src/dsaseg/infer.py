"""Sliding-window inference with optional mirror test-time augmentation."""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from . import autodiff as ad
from .model import DSANet
from .pipeline import (DsaSequence, extract_patches, minip, normalize_sample, resample_temporal,
                       stitch, write_pgm)

# (flip rows, flip cols) for the four mirror variants
MIRROR_VARIANTS = ((False, False), (True, False), (False, True), (True, True))


def prepare_inputs(seq: DsaSequence, target_frames: int) -> Tuple[np.ndarray, np.ndarray]:
    """Resample, project and normalise one sequence; returns float (T,H,W) and (H,W)."""
    seq = resample_temporal(seq, target_frames)
    proj = minip(seq).pixels
    return normalize_sample(seq.frames.astype(np.float64), proj.astype(np.float64))


def _flip(a, fy, fx):
    if fy:
        a = a[..., ::-1, :]
    if fx:
        a = a[..., ::-1]
    return a


def forward_probs(model: DSANet, frames, mip) -> np.ndarray:
    """Full-resolution class probabilities for a batch: frames (B,T,H,W), mip (B,H,W)."""
    dt = model.dtype
    seq = np.ascontiguousarray(frames[:, :, None], dtype=dt)
    m = np.ascontiguousarray(mip[:, None], dtype=dt)
    with ad.no_grad():
        out = model(ad.Tensor(seq), ad.Tensor(m))
        return ad.softmax(out.logits_full, axis=1).data.astype(np.float64)


def predict_probs(model: DSANet, frames, mip, patch: int, stride: int, tta: bool = False,
                  batch: int = 4) -> np.ndarray:
    """Stitched (C, H, W) probabilities for one normalised sample."""
    grid, fpatches = extract_patches(frames, patch, stride)
    _, mpatches = extract_patches(mip, patch, stride)
    variants = MIRROR_VARIANTS if tta else MIRROR_VARIANTS[:1]
    outputs = []
    for i in range(0, len(grid.offsets), batch):
        fb, mb = fpatches[i:i + batch], mpatches[i:i + batch]
        acc = 0.0
        for fy, fx in variants:
            p = forward_probs(model, _flip(fb, fy, fx), _flip(mb, fy, fx))
            acc = acc + _flip(p, fy, fx)
        outputs.extend(acc / len(variants))
    return stitch(grid, outputs)


def predict(model: DSANet, seq: DsaSequence, patch: int, stride: int, tta: bool = False,
            target_frames: Optional[int] = None):
    """Return (class map uint8, probabilities (C,H,W))."""
    frames, mip = prepare_inputs(seq, target_frames or model.config.frames)
    probs = predict_probs(model, frames, mip, patch, stride, tta)
    return probs.argmax(axis=0).astype(np.uint8), probs


def write_prediction(out_dir, pred, probs=None):
    """``pred.pgm`` plus 16-bit ``prob_{k}.pgm`` scaled to [0, 65535]."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / "pred.pgm", np.asarray(pred, dtype=np.uint8))
    if probs is not None:
        for k, p in enumerate(probs):
            write_pgm(out / f"prob_{k}.pgm", np.rint(np.clip(p, 0, 1) * 65535).astype(np.uint16))


def read_probs(pred_dir, num_classes: int = 3) -> Optional[np.ndarray]:
    from .pipeline import read_pgm
    paths = [Path(pred_dir) / f"prob_{k}.pgm" for k in range(num_classes)]
    if not all(p.is_file() for p in paths):
        return None
    return np.stack([read_pgm(p).astype(np.float64) / 65535.0 for p in paths])
