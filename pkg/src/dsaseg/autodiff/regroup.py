"""Axis reorder/regroup descriptors (``reshape_permute``).

A :class:`Regroup` is a pattern such as ``"(b t) c h w -> (b h w) t c"`` plus
whatever axis sizes are needed to split grouped inputs. Parenthesised names
form one axis, outermost name first. The element mapping is row-major: an
element with named coordinates ``(b, t, c, h, w)`` keeps them, so for the
pattern above its flat output index is
``((((b*H + h)*W + w)*T + t)*C + c)``.
"""
from __future__ import annotations

import re

import numpy as np

from ..errors import DimensionError
from .tensor import Tensor, as_tensor, make_result

_TOKEN = re.compile(r"\(|\)|[A-Za-z_][A-Za-z0-9_]*")


def _parse_side(side: str):
    groups, cur = [], None
    for tok in _TOKEN.findall(side):
        if tok == "(":
            if cur is not None:
                raise ValueError(f"nested groups in {side!r}")
            cur = []
        elif tok == ")":
            if cur is None:
                raise ValueError(f"unbalanced ')' in {side!r}")
            groups.append(tuple(cur))
            cur = None
        elif cur is not None:
            cur.append(tok)
        else:
            groups.append((tok,))
    if cur is not None:
        raise ValueError(f"unbalanced '(' in {side!r}")
    return groups


class Regroup:
    def __init__(self, pattern: str, **sizes: int):
        if "->" not in pattern:
            raise ValueError(f"pattern needs '->': {pattern!r}")
        lhs, rhs = (s.strip() for s in pattern.split("->"))
        self.pattern = f"{lhs} -> {rhs}"
        self.lhs = _parse_side(lhs)
        self.rhs = _parse_side(rhs)
        names_l = [n for g in self.lhs for n in g]
        names_r = [n for g in self.rhs for n in g]
        if sorted(names_l) != sorted(names_r) or len(set(names_l)) != len(names_l):
            raise ValueError(f"both sides must name the same axes exactly once: {pattern!r}")
        self.sizes = dict(sizes)

    def inverse(self) -> "Regroup":
        lhs, rhs = self.pattern.split("->")
        return Regroup(f"{rhs.strip()} -> {lhs.strip()}", **self.sizes)

    def resolve(self, shape) -> dict:
        """Infer every axis size from an input ``shape``."""
        if len(shape) != len(self.lhs):
            raise DimensionError(f"{self.pattern!r} expects rank {len(self.lhs)}, got {shape}")
        sizes = dict(self.sizes)
        for group, dim in zip(self.lhs, shape):
            unknown = [n for n in group if n not in sizes]
            known = int(np.prod([sizes[n] for n in group if n in sizes], dtype=np.int64))
            if len(unknown) > 1:
                raise DimensionError(f"cannot infer sizes of {unknown} in {self.pattern!r}")
            if unknown:
                if known == 0 or dim % known:
                    raise DimensionError(f"axis of size {dim} not divisible by {known} "
                                         f"in {self.pattern!r}")
                sizes[unknown[0]] = dim // known
            elif known != dim:
                raise DimensionError(f"group {group} has size {known}, input axis is {dim} "
                                     f"in {self.pattern!r}")
        return sizes

    def apply_array(self, arr: np.ndarray) -> np.ndarray:
        sizes = self.resolve(arr.shape)
        elem_l = [n for g in self.lhs for n in g]
        elem_r = [n for g in self.rhs for n in g]
        x = arr.reshape([sizes[n] for n in elem_l])
        x = x.transpose([elem_l.index(n) for n in elem_r])
        out_shape = [int(np.prod([sizes[n] for n in g], dtype=np.int64)) for g in self.rhs]
        return np.ascontiguousarray(x).reshape(out_shape)

    def __call__(self, x) -> Tensor:
        return reshape_permute(x, self)

    def __repr__(self):
        return f"Regroup({self.pattern!r}, {self.sizes})"


def reshape_permute(x, spec: Regroup) -> Tensor:
    """Apply ``spec`` to ``x``; the total element count is always preserved."""
    x = as_tensor(x)
    sizes = spec.resolve(x.shape)
    inverse = Regroup(spec.inverse().pattern, **sizes)
    out = spec.apply_array(x.data)
    return make_result("reshape_permute", out, (x,), lambda g: (inverse.apply_array(g),))
