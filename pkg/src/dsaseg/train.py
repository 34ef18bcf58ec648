"""SGD training loop with polynomial learning-rate decay and deep supervision."""
from __future__ import annotations

import json
import math
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, FormatError, NumericalError
from .infer import predict_probs
from .metrics import confusion_counts, scalar_metrics, total_loss
from .model import DSANet, ModelConfig
from .phantom import load_folds
from .pipeline import augment, load_sequence, minip, mirror_pad, normalize_sample, resample_temporal

LOG_NAME = "train_log.jsonl"
BEST_NAME = "best.dsaw"
LAST_NAME = "last.dsaw"
MODEL_CONFIG_NAME = "model_config.json"


class TrainingAborted(NumericalError):
    """Loss or gradient became non-finite."""


@dataclass
class TrainConfig:
    epochs: int = 40
    iters_per_epoch: int = 16
    batch_size: int = 2
    lr: float = 0.01
    momentum: float = 0.99
    nesterov: bool = True
    weight_decay: float = 3e-5
    poly_power: float = 0.9
    grad_clip: float = 12.0
    val_fold: int = 0
    target_frames: int = 8
    patch: int = 64
    stride: int = 32
    augment: bool = True
    seed: int = 0
    f64: bool = False

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


def poly_lr(base: float, epoch: int, epochs: int, power: float = 0.9) -> float:
    return base * (1.0 - epoch / epochs) ** power


class SGD:
    """Momentum SGD with L2 weight decay folded into the gradient."""

    def __init__(self, params, momentum=0.99, weight_decay=3e-5, nesterov=True):
        self.params = list(params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.nesterov = nesterov
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float):
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            g = p.grad + self.weight_decay * p.data
            v *= self.momentum
            v += g
            upd = g + self.momentum * v if self.nesterov else v
            p.data -= (lr * upd).astype(p.dtype)


def clip_grad_norm(params, max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2))
                          for p in params if p.grad is not None))
    if not math.isfinite(total):
        raise TrainingAborted(f"gradient norm is {total}")
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-6)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


@dataclass
class RawSample:
    id: str
    frames: np.ndarray  # (T, H, W) float64, raw intensities
    minip: np.ndarray
    label: np.ndarray


def load_samples(data_dir, ids: List[str], target_frames: int) -> List[RawSample]:
    out = []
    for sid in ids:
        seq, label = load_sequence(Path(data_dir) / sid)
        if label is None:
            raise FormatError("training sample has no label.pgm", Path(data_dir) / sid)
        seq = resample_temporal(seq, target_frames)
        out.append(RawSample(sid, seq.frames.astype(np.float64),
                             minip(seq).pixels.astype(np.float64), label.classes))
    return out


def split_ids(data_dir, val_fold: int) -> Tuple[List[str], List[str]]:
    folds = load_folds(data_dir)
    if val_fold >= 0 and str(val_fold) not in folds:
        raise ConfigError(f"fold {val_fold} not in folds.json (have {sorted(folds)})")
    train = sorted(i for k, ids in folds.items() if int(k) != val_fold for i in ids)
    val = sorted(folds.get(str(val_fold), [])) if val_fold >= 0 else []
    return train, val


def _fit(a, size):
    """Mirror-pad the trailing two axes up to ``size`` when the image is smaller."""
    h, w = a.shape[-2:]
    ph, pw = max(0, size - h), max(0, size - w)
    if ph == 0 and pw == 0:
        return a
    return mirror_pad(a, (ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2))


def make_batch(samples: List[RawSample], idx, rng: np.random.Generator, cfg: TrainConfig):
    frames, mips, labels = [], [], []
    for i in idx:
        s = samples[i]
        f, m, lab = _fit(s.frames, cfg.patch), _fit(s.minip, cfg.patch), _fit(s.label, cfg.patch)
        if cfg.augment:
            f, m, lab = augment(f, m, lab, rng, crop_size=cfg.patch)
        else:
            y0 = int(rng.integers(0, f.shape[-2] - cfg.patch + 1))
            x0 = int(rng.integers(0, f.shape[-1] - cfg.patch + 1))
            sl = (slice(y0, y0 + cfg.patch), slice(x0, x0 + cfg.patch))
            f, m, lab = f[(slice(None),) + sl], m[sl], lab[sl]
        f, m = normalize_sample(f, m)
        frames.append(f)
        mips.append(m)
        labels.append(lab)
    return np.stack(frames), np.stack(mips), np.stack(labels).astype(np.int64)


def validation_dice(model: DSANet, samples: List[RawSample], cfg: TrainConfig) -> Optional[float]:
    if not samples:
        return None
    scores = []
    for s in samples:
        f, m = normalize_sample(s.frames, s.minip)
        probs = predict_probs(model, f, m, cfg.patch, cfg.stride)
        counts = confusion_counts(probs.argmax(axis=0), s.label)
        scores.append(scalar_metrics(counts["all"])["dice"])
    return float(np.mean(scores))


def train(data_dir, out_dir, cfg: TrainConfig, model_cfg: ModelConfig, log=None) -> Dict:
    """Train one model; returns a summary dict. Raises TrainingAborted on NaN."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model_cfg = ModelConfig.from_dict({**model_cfg.to_dict(), "frames": cfg.target_frames,
                                      "patch_size": cfg.patch})
    model_cfg.validate(cfg.patch, cfg.patch)
    train_ids, val_ids = split_ids(data_dir, cfg.val_fold)
    if not train_ids:
        raise ConfigError("no training samples")
    train_set = load_samples(data_dir, train_ids, cfg.target_frames)
    val_set = load_samples(data_dir, val_ids, cfg.target_frames)

    dtype = np.float64 if cfg.f64 else np.float32
    model = DSANet(model_cfg, seed=cfg.seed, dtype=dtype)
    model_cfg.save(out / MODEL_CONFIG_NAME)
    params = model.parameters()
    opt = SGD(params, cfg.momentum, cfg.weight_decay, cfg.nesterov)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    log = log if log is not None else sys.stderr

    best = -math.inf
    history = []
    log_path = out / LOG_NAME
    with open(log_path, "w") as fh:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            lr = poly_lr(cfg.lr, epoch, cfg.epochs, cfg.poly_power)
            losses = []
            for it in range(cfg.iters_per_epoch):
                replace = len(train_set) < cfg.batch_size
                idx = rng.choice(len(train_set), size=cfg.batch_size, replace=replace)
                frames, mips, labels = make_batch(train_set, idx, rng, cfg)
                model.zero_grad()
                try:
                    with ad.Tape() as tape:
                        output = model(ad.Tensor(frames[:, :, None].astype(dtype)),
                                       ad.Tensor(mips[:, None].astype(dtype)))
                        loss = total_loss(output, labels)
                    value = float(loss.data)
                    if not math.isfinite(value):
                        raise TrainingAborted(f"loss is {value}")
                    ad.backward(loss)
                    tape.clear()
                    clip_grad_norm(params, cfg.grad_clip)
                except NumericalError as exc:
                    raise TrainingAborted(
                        f"non-finite value at epoch {epoch} iteration {it}: {exc}") from exc
                opt.step(lr)
                losses.append(value)
            val = validation_dice(model, val_set, cfg)
            rec = {"epoch": epoch, "lr": lr, "train_loss": float(np.mean(losses)),
                   "val_dice": val}
            fh.write(json.dumps(rec) + "\n")
            fh.flush()
            history.append(rec)
            score = val if val is not None else -epoch  # no validation: keep the latest
            if val is None or score > best:
                best = score
                ad.save_checkpoint(out / BEST_NAME, model.state_dict())
            print(f"epoch {epoch:3d} lr {lr:.5f} loss {rec['train_loss']:.4f} "
                  f"val_dice {'-' if val is None else f'{val:.4f}'} "
                  f"({time.perf_counter() - t0:.1f}s)", file=log)
    ad.save_checkpoint(out / LAST_NAME, model.state_dict())
    best_dice = max((r["val_dice"] for r in history if r["val_dice"] is not None), default=None)
    return {"history": history, "best_val_dice": best_dice, "train_ids": train_ids,
            "val_ids": val_ids, "out_dir": str(out)}


def load_model(run_dir, checkpoint: Optional[str] = None, overrides: Optional[Dict] = None,
               dtype=np.float32) -> DSANet:
    """Rebuild a model from ``run_dir``; ConfigError if the weights do not fit."""
    run = Path(run_dir)
    if run.is_file():
        ckpt, run = run, run.parent
    else:
        ckpt = run / (checkpoint or BEST_NAME)
    cfg_path = run / MODEL_CONFIG_NAME
    if not cfg_path.is_file():
        raise FormatError("missing model config", cfg_path)
    cfg = ModelConfig.load(cfg_path)
    if overrides:
        cfg = ModelConfig.from_dict({**cfg.to_dict(), **overrides})
    model = DSANet(cfg, dtype=dtype)
    model.load_state_dict(ad.load_checkpoint(ckpt))
    return model
