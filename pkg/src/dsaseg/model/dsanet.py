"""DSANet: spatial + temporal encoders, TemporalFormer, spatio-temporal fusion, decoder."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List

import numpy as np

from ..autodiff import Regroup, Tensor, as_tensor, ops
from ..errors import DimensionError
from .config import ModelConfig
from .layers import (
    MLP, Conv2d, ConvBlock, ConvTranspose2d, LayerNorm, Module, MultiHeadSelfAttention, _param,
)


@dataclass
class EncoderState:
    skips: List[Tensor]
    bottleneck: Tensor


@dataclass
class ModelOutput:
    logits_full: Tensor
    logits_half: Tensor
    logits_quarter: Tensor

    @property
    def heads(self):
        return [self.logits_full, self.logits_half, self.logits_quarter]


class Encoder(Module):
    """Five-level (by default) convolutional encoder; used for both SEB and TEB."""

    def __init__(self, cin, base, levels):
        self.stem = ConvBlock(cin, base)
        self.down = [ConvBlock(base * 2 ** (i - 1), base * 2 ** i) for i in range(1, levels)]

    def forward(self, x) -> EncoderState:
        n_down = len(self.down)
        h, w = x.shape[-2:]
        if h % 2 ** n_down or w % 2 ** n_down:
            raise DimensionError(f"encoder input {h}x{w} not divisible by {2 ** n_down}")
        x = self.stem(x)
        skips = []
        for block in self.down:
            skips.append(x)
            x = block(ops.maxpool2d(x, 2, 2))
        return EncoderState(skips, x)


def fuse_skips(teb_skip, seb_skip) -> Tensor:
    """Collapse the per-frame TEB skip over T (max) and concatenate with the SEB skip."""
    teb_skip, seb_skip = as_tensor(teb_skip), as_tensor(seb_skip)
    b, c, h, w = seb_skip.shape
    bt = teb_skip.shape[0]
    if teb_skip.shape[1:] != (c, h, w) or bt % b:
        raise DimensionError(f"skip mismatch: TEB {teb_skip.shape} vs SEB {seb_skip.shape}")
    t = bt // b
    collapsed = ops.pool_over_axis(teb_skip.reshape(b, t, c, h, w), axis=1, mode="max")
    return ops.concat([collapsed.reshape(b, c, h, w), seb_skip], axis=1)


class TemporalFormerLayer(Module):
    def __init__(self, dim, frames, heads, mlp_ratio):
        self.pos = _param((frames, dim), "normal", std=0.02)
        self.norm_t = LayerNorm(dim)
        self.attn_t = MultiHeadSelfAttention(dim, heads)
        self.norm_s = LayerNorm(dim)
        self.attn_s = MultiHeadSelfAttention(dim, heads)
        self.norm_mlp = LayerNorm(dim)
        self.mlp = MLP(dim, int(round(dim * mlp_ratio)))

    def forward(self, x, b, h, w):
        # x: (B h w) T c
        x = x + self.pos
        x = x + self.attn_t(self.norm_t(x))
        x = Regroup("(b h w) t c -> (b t) (h w) c", b=b, h=h, w=w)(x)
        x = x + self.attn_s(self.norm_s(x))
        x = x + self.mlp(self.norm_mlp(x))
        return Regroup("(b t) (h w) c -> (b h w) t c", b=b, h=h, w=w)(x)


class TemporalFormer(Module):
    def __init__(self, dim, frames, heads, mlp_ratio, layers):
        if dim % heads:
            from ..errors import ConfigError
            raise ConfigError(f"{heads} heads do not divide {dim} channels")
        self.frames = frames
        self.layers = [TemporalFormerLayer(dim, frames, heads, mlp_ratio) for _ in range(layers)]

    def forward(self, f_s, b) -> Tensor:
        bt, c, h, w = f_s.shape
        t = bt // b
        if t != self.frames:
            raise DimensionError(f"TemporalFormer built for {self.frames} frames, got {t}")
        x = Regroup("(b t) c h w -> (b h w) t c", b=b)(f_s)
        for layer in self.layers:
            x = layer(x, b, h, w)
        x = Regroup("(b h w) t c -> b t c h w", b=b, h=h, w=w)(x)
        return ops.pool_over_axis(x, axis=1, mode="max").reshape(b, c, h, w)


class SpatioTemporalFusion(Module):
    """Summed per-position attention weights from both branches re-weight each branch's values."""

    def __init__(self, dim):
        self.dim = dim
        self.qkv = Conv2d(dim, 3 * dim, k=1)
        self.record = None

    def _qkv(self, f):
        b, c, h, w = f.shape
        y = self.qkv(ops.maxpool2d(f, 2, 2)).reshape(b, 3, c, (h // 2) * (w // 2))
        return y[:, 0], y[:, 1], y[:, 2]

    def _weights(self, q, k):
        scores = (q * k).sum(axis=1) * (1.0 / math.sqrt(self.dim))
        return ops.softmax(scores, axis=-1)

    def forward(self, f_m, f_s) -> Tensor:
        if f_m.shape != f_s.shape:
            raise DimensionError(f"fusion inputs differ: {f_m.shape} vs {f_s.shape}")
        b, c, h, w = f_m.shape
        if h % 2 or w % 2:
            raise DimensionError(f"fusion needs even spatial size, got {h}x{w}")
        q_m, k_m, v_m = self._qkv(f_m)
        q_s, k_s, v_s = self._qkv(f_s)
        alpha_i = self._weights(q_m, k_m)
        alpha_s = self._weights(q_s, k_s)
        if self.record is not None:
            self.record.append((alpha_i.data, alpha_s.data))
        alpha = (alpha_i + alpha_s).reshape(b, 1, -1)
        enhanced = ops.concat([alpha * v_m, alpha * v_s], axis=1)
        enhanced = ops.upsample2d(enhanced.reshape(b, 2 * c, h // 2, w // 2), 2, "bilinear")
        return enhanced + ops.concat([f_s, f_m], axis=1)


class Decoder(Module):
    def __init__(self, bottleneck_in, skip_channels, num_classes):
        self.ups, self.blocks, self.heads = [], [], []
        cin = bottleneck_in
        for c in reversed(skip_channels):
            self.ups.append(ConvTranspose2d(cin, c, 2))
            self.blocks.append(ConvBlock(3 * c, c))
            cin = c
        for c in list(skip_channels)[2::-1]:
            self.heads.append(Conv2d(c, num_classes, k=1))

    def forward(self, x, fused_skips) -> ModelOutput:
        """``fused_skips`` are ordered deepest-first."""
        if len(fused_skips) != len(self.ups):
            raise DimensionError(f"decoder expects {len(self.ups)} skips, got {len(fused_skips)}")
        feats = []
        for up, block, skip in zip(self.ups, self.blocks, fused_skips):
            x = up(x)
            if x.shape[0] != skip.shape[0] or x.shape[2:] != skip.shape[2:]:
                raise DimensionError(f"decoder skip {skip.shape} does not match {x.shape}")
            x = block(ops.concat([x, skip], axis=1))
            feats.append(x)
        quarter, half, full = feats[-3:]
        return ModelOutput(self.heads[2](full), self.heads[1](half), self.heads[0](quarter))


class DSANet(Module):
    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        config.validate()
        self.config = config
        base, levels = config.base_channels, config.levels
        c = config.bottleneck_channels
        self.seb = Encoder(1, base, levels)
        if config.ablation != "minip-only":
            self.teb = Encoder(1, base, levels)
            self.tf = TemporalFormer(c, config.frames, config.tf_heads, config.mlp_ratio,
                                     config.tf_layers)
        self.stf = SpatioTemporalFusion(c)
        self.decoder = Decoder(2 * c, config.skip_channels, config.num_classes)
        self.initialize(seed)
        self.to(dtype)

    @property
    def dtype(self):
        return self.parameters()[0].dtype

    def attention_modules(self):
        mods = []
        if hasattr(self, "tf"):
            for layer in self.tf.layers:
                mods += [layer.attn_t, layer.attn_s]
        return mods

    def encode(self, seq, minip):
        """Return (fused skips deepest-first, F_m, F_s)."""
        seq, minip = as_tensor(seq), as_tensor(minip)
        b, t, _, h, w = seq.shape
        if minip.shape != (b, 1, h, w):
            raise DimensionError(f"MinIP {minip.shape} inconsistent with sequence {seq.shape}")
        ablation = self.config.ablation
        seb = self.seb(minip) if ablation != "sequence-only" else None
        if ablation == "minip-only":
            skips = [ops.concat([s, s], axis=1) for s in seb.skips]
            return skips[::-1], seb.bottleneck, seb.bottleneck
        teb = self.teb(seq.reshape(b * t, 1, h, w))
        f_s = self.tf(teb.bottleneck, b)
        if ablation == "sequence-only":
            skips = []
            for s in teb.skips:
                _, c, hh, ww = s.shape
                col = ops.pool_over_axis(s.reshape(b, t, c, hh, ww), 1, "max").reshape(b, c, hh, ww)
                skips.append(ops.concat([col, col], axis=1))
            return skips[::-1], f_s, f_s
        skips = [fuse_skips(ts, ss) for ts, ss in zip(teb.skips, seb.skips)]
        return skips[::-1], seb.bottleneck, f_s

    def forward(self, seq, minip) -> ModelOutput:
        seq, minip = as_tensor(seq), as_tensor(minip)
        dt = self.dtype
        if seq.dtype != dt:
            seq = as_tensor(seq.data.astype(dt))
        if minip.dtype != dt:
            minip = as_tensor(minip.data.astype(dt))
        if seq.ndim != 5 or seq.shape[2] != 1:
            raise DimensionError(f"sequence must be (B, T, 1, H, W), got {seq.shape}")
        self.config.validate(seq.shape[3], seq.shape[4])
        skips, f_m, f_s = self.encode(seq, minip)
        return self.decoder(self.stf(f_m, f_s), skips)
