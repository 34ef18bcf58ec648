"""Module system and the basic learnable layers."""
from __future__ import annotations

import math
import zlib
from typing import Dict, Iterator, Tuple

import numpy as np

from ..autodiff import InitSpec, Parameter, Tensor
from ..autodiff import ops


def _param(shape, kind, fan_in=0, std=0.0, dtype=np.float64):
    return Parameter(np.zeros(shape, dtype=dtype), init_spec=InitSpec(kind, 0, fan_in, std))


def gn_groups(channels: int) -> int:
    return 8 if channels >= 8 else channels


class Module:
    """Base class: parameters are discovered from attributes in definition order."""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        problems = []
        for name, p in own.items():
            if name not in state:
                problems.append(f"missing {name} {p.shape}")
            elif tuple(state[name].shape) != p.shape:
                problems.append(f"{name}: checkpoint {tuple(state[name].shape)} vs model {p.shape}")
        problems += [f"unexpected {name}" for name in state if name not in own]
        if problems:
            from ..errors import ConfigError
            raise ConfigError("checkpoint does not match model: " + "; ".join(problems))
        for name, p in own.items():
            p.data = np.array(state[name], dtype=p.dtype)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def to(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            if p.grad is not None:
                p.grad = p.grad.astype(dtype)
        return self

    def initialize(self, seed: int):
        """(Re)initialise every parameter from ``seed`` and its own name.

        Each parameter draws from a generator keyed by ``(seed, crc32(name))``,
        so values do not depend on construction order.
        """
        for name, p in self.named_parameters():
            p.name = name
            spec = p.init_spec
            spec.seed = seed
            rng = np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))
            if spec.kind == "kaiming_uniform":
                bound = math.sqrt(6.0 / spec.fan_in)
                vals = rng.uniform(-bound, bound, size=p.shape)
            elif spec.kind == "normal":
                vals = rng.normal(0.0, spec.std, size=p.shape)
            elif spec.kind == "zeros":
                vals = np.zeros(p.shape)
            elif spec.kind == "ones":
                vals = np.ones(p.shape)
            else:
                raise ValueError(f"unknown initialiser {spec.kind!r}")
            p.data = vals.astype(p.dtype)
            p.grad = None
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv2d(Module):
    def __init__(self, cin, cout, k=3):
        self.k = k
        self.weight = _param((cout, cin, k, k), "kaiming_uniform", fan_in=cin * k * k)
        self.bias = _param((cout,), "zeros")

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=1, padding=(self.k - 1) // 2)


class ConvTranspose2d(Module):
    def __init__(self, cin, cout, k=2):
        self.k = k
        self.weight = _param((cin, cout, k, k), "kaiming_uniform", fan_in=cin)
        self.bias = _param((cout,), "zeros")

    def forward(self, x):
        return ops.conv_transpose2d(x, self.weight, self.bias, stride=self.k)


class GroupNorm(Module):
    def __init__(self, channels, eps=1e-5):
        self.groups = gn_groups(channels)
        self.eps = eps
        self.gamma = _param((channels,), "ones")
        self.beta = _param((channels,), "zeros")

    def forward(self, x):
        return ops.group_norm(x, self.groups, self.gamma, self.beta, self.eps)


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        self.eps = eps
        self.gamma = _param((dim,), "ones")
        self.beta = _param((dim,), "zeros")

    def forward(self, x):
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class Linear(Module):
    def __init__(self, d_in, d_out):
        self.weight = _param((d_out, d_in), "kaiming_uniform", fan_in=d_in)
        self.bias = _param((d_out,), "zeros")

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias)


class ConvBlock(Module):
    """Two rounds of 3x3 conv -> GroupNorm -> GELU."""

    def __init__(self, cin, cout):
        self.conv1 = Conv2d(cin, cout)
        self.norm1 = GroupNorm(cout)
        self.conv2 = Conv2d(cout, cout)
        self.norm2 = GroupNorm(cout)

    def forward(self, x):
        x = ops.gelu(self.norm1(self.conv1(x)))
        return ops.gelu(self.norm2(self.conv2(x)))


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over axis 1 of an (N, L, c) input."""

    def __init__(self, dim, heads):
        self.heads = heads
        self.qkv = Linear(dim, 3 * dim)
        self.proj = Linear(dim, dim)
        self.record = None  # set to a list to capture attention weights

    def forward(self, x):
        n, length, c = x.shape
        h = self.heads
        d = c // h
        qkv = self.qkv(x).reshape(n, length, 3, h, d).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = ops.matmul(q, k.permute(0, 1, 3, 2)) * (1.0 / math.sqrt(d))
        attn = ops.softmax(scores, axis=-1)
        if self.record is not None:
            self.record.append(attn.data)
        y = ops.matmul(attn, v).permute(0, 2, 1, 3).reshape(n, length, c)
        return self.proj(y)


class MLP(Module):
    def __init__(self, dim, hidden):
        self.fc1 = Linear(dim, hidden)
        self.fc2 = Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(ops.gelu(self.fc1(x)))
