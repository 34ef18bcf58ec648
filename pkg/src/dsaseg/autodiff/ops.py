"""Differentiable primitives.

Each primitive computes its forward value with numpy and registers a
vector-Jacobian product on the active tape. All arrays stay in the dtype of
the inputs.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from .. import kernels
from ..errors import DimensionError
from .tensor import Tensor, as_tensor, make_result

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _lift(a, b):
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    return a, b


# -- elementwise ------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a, b)
    sa, sb = a.shape, b.shape
    return make_result("add", a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _lift(a, b)
    sa, sb = a.shape, b.shape
    return make_result("sub", a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _lift(a, b)
    ad, bd = a.data, b.data

    def vjp(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return make_result("mul", ad * bd, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = _lift(a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def vjp(g):
        return (_unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None)

    return make_result("div", out, (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_result("neg", -a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_result("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return make_result("log", np.log(ad), (a,), lambda g: (g / ad,))


def clamp_min(a, lo: float) -> Tensor:
    a = as_tensor(a)
    mask = a.data >= lo
    return make_result("clamp_min", np.maximum(a.data, lo), (a,), lambda g: (g * mask,))


def _gelu_grad(x):
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    return cdf + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def gelu(a) -> Tensor:
    """Exact (erf) Gaussian error linear unit."""
    a = as_tensor(a)
    x = a.data
    out = (x * 0.5 * (1.0 + erf(x / _SQRT2))).astype(x.dtype, copy=False)

    def vjp(g):
        return ((g * _gelu_grad(x)).astype(x.dtype, copy=False),)

    return make_result("gelu", out, (a,), vjp)


# -- reductions and shape -----------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape
    axes = _norm_axes(axis, a.ndim)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return make_result("sum", np.sum(a.data, axis=axes, keepdims=keepdims), (a,), vjp)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return mul(sum(a, axis=axes, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {src} to {tuple(shape)}") from exc
    return make_result("reshape", out, (a,), lambda g: (g.reshape(src),))


def permute(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_result("permute", np.ascontiguousarray(a.data.transpose(axes)), (a,),
                       lambda g: (g.transpose(inv),))


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    shape, dtype = a.shape, a.dtype

    def vjp(g):
        full = np.zeros(shape, dtype=dtype)
        full[index] = g
        return (full,)

    return make_result("getitem", np.ascontiguousarray(a.data[index]), (a,), vjp)


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
                s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != ax):
            raise DimensionError(f"concat shape mismatch: {ref} vs {t.shape} on axis {axis}")
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=ax))

    return make_result("concat", np.concatenate([t.data for t in tensors], axis=ax),
                       tensors, vjp)


# -- linear algebra -----------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _lift(a, b)
    ad, bd = a.data, b.data

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return make_result("matmul", ad @ bd, (a, b), vjp)


def linear(x, weight, bias=None) -> Tensor:
    """Affine map over the last axis: ``x @ weight.T + bias``."""
    x, weight = as_tensor(x), as_tensor(weight)
    d_out, d_in = weight.shape
    if x.shape[-1] != d_in:
        raise DimensionError(f"linear expects last axis {d_in}, got {x.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, d_in)
    out = x2 @ weight.data.T
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
    inputs = (x, weight) if bias is None else (x, weight, bias)
    wd = weight.data

    def vjp(g):
        g2 = g.reshape(-1, d_out)
        gx = (g2 @ wd).reshape(x.shape) if x.requires_grad else None
        gw = g2.T @ x2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return make_result("linear", out.reshape(lead + (d_out,)), inputs, vjp)


# -- normalisation and attention helpers --------------------------------------

def softmax(a, axis=-1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return make_result("softmax", p, (a,), vjp)


def log_softmax(a, axis=-1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def vjp(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return make_result("log_softmax", out, (a,), vjp)


def _normalize_vjp(g, xhat, inv_std, axes):
    # d/dx of (x - mean) * inv_std, statistics taken over ``axes``
    gm = g.mean(axis=axes, keepdims=True)
    gxm = (g * xhat).mean(axis=axes, keepdims=True)
    return inv_std * (g - gm - xhat * gxm)


def group_norm(x, groups: int, gamma, beta, eps: float = 1e-5) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    b, c = x.shape[:2]
    if c % groups:
        raise DimensionError(f"group_norm: {c} channels not divisible by {groups} groups")
    spatial = x.shape[2:]
    xg = x.data.reshape(b, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv_std).reshape(x.shape)
    bshape = (1, c) + (1,) * len(spatial)
    gd = gamma.data.reshape(bshape)
    out = xhat * gd + beta.data.reshape(bshape)
    red = (0,) + tuple(range(2, x.ndim))

    def vjp(g):
        gx = None
        if x.requires_grad:
            gh = (g * gd).reshape(b, groups, -1)
            gx = _normalize_vjp(gh, xhat.reshape(b, groups, -1), inv_std, 2).reshape(x.shape)
        return gx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return make_result("group_norm", out, (x, gamma, beta), vjp)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = xhat * gamma.data + beta.data

    def vjp(g):
        gx = _normalize_vjp(g * gamma.data, xhat, inv_std, -1) if x.requires_grad else None
        g2 = g.reshape(-1, d)
        return gx, (g2 * xhat.reshape(-1, d)).sum(axis=0), g2.sum(axis=0)

    return make_result("layer_norm", out, (x, gamma, beta), vjp)


# -- convolution and pooling --------------------------------------------------

def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and weight, got {x.shape}, {weight.shape}")
    b, c, h, w = x.shape
    co, ci, k, k2 = weight.shape
    if ci != c:
        raise DimensionError(f"conv2d: input has {c} channels, weight expects {ci}")
    if k != k2:
        raise DimensionError("conv2d: only square kernels are supported")
    p = padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    ho = (h + 2 * p - k) // stride + 1
    wo = (w + 2 * p - k) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d: kernel {k} larger than padded input {h}x{w}")
    cols = kernels.im2col(xp, k, stride)
    w2 = weight.data.reshape(co, -1)
    out = cols @ w2.T
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data
    out = np.ascontiguousarray(out.reshape(b, ho, wo, co).transpose(0, 3, 1, 2))
    inputs = (x, weight) if bias is None else (x, weight, bias)
    padded_shape = xp.shape

    def vjp(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, co)
        gx = None
        if x.requires_grad:
            gxp = kernels.col2im(g2 @ w2, padded_shape, k, stride)
            gx = gxp[:, :, p:p + h, p:p + w] if p else gxp
            gx = np.ascontiguousarray(gx)
        gw = (g2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return make_result("conv2d", out, inputs, vjp)


def conv_transpose2d(x, weight, bias=None, stride: int = 2) -> Tensor:
    """Transposed convolution with kernel size equal to stride (non-overlapping)."""
    x, weight = as_tensor(x), as_tensor(weight)
    b, c, h, w = x.shape
    ci, co, k, _ = weight.shape
    if ci != c:
        raise DimensionError(f"conv_transpose2d: input has {c} channels, weight expects {ci}")
    if k != stride:
        raise DimensionError("conv_transpose2d: kernel size must equal stride")
    xd, wd = x.data, weight.data
    # (B, H, W, C) @ (C, O*k*k)
    x2 = xd.transpose(0, 2, 3, 1).reshape(-1, c)
    y = (x2 @ wd.reshape(c, -1)).reshape(b, h, w, co, k, k)
    out = y.transpose(0, 3, 1, 4, 2, 5).reshape(b, co, h * k, w * k)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data.reshape(1, co, 1, 1)
    out = np.ascontiguousarray(out)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        gy = g.reshape(b, co, h, k, w, k).transpose(0, 2, 4, 1, 3, 5).reshape(-1, co * k * k)
        gx = (gy @ wd.reshape(c, -1).T).reshape(b, h, w, c).transpose(0, 3, 1, 2) \
            if x.requires_grad else None
        gw = (x2.T @ gy).reshape(wd.shape) if weight.requires_grad else None
        if gx is not None:
            gx = np.ascontiguousarray(gx)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return make_result("conv_transpose2d", out, inputs, vjp)


def maxpool2d(x, window: int = 2, stride: int = 2) -> Tensor:
    x = as_tensor(x)
    if window != stride:
        raise DimensionError("maxpool2d supports non-overlapping windows only (window == stride)")
    b, c, h, w = x.shape
    if h % stride or w % stride:
        raise DimensionError(f"maxpool2d: spatial size {h}x{w} not divisible by {stride}")
    out, idx = kernels.maxpool2d_forward(x.data, window)
    shape = x.shape

    return make_result("maxpool2d", out, (x,),
                       lambda g: (kernels.maxpool2d_backward(g, idx, shape, window),))


def pool_over_axis(x, axis: int, mode: str = "max", factor: int | None = None) -> Tensor:
    """Pool ``axis`` by ``factor`` (``None`` collapses the axis to length 1)."""
    x = as_tensor(x)
    ax = axis % x.ndim
    n = x.shape[ax]
    factor = n if factor is None else factor
    if factor < 1 or factor > n:
        raise DimensionError(f"pool factor {factor} invalid for axis of size {n}")
    if n % factor:
        raise DimensionError(f"axis size {n} not divisible by pool factor {factor}")
    split = x.shape[:ax] + (n // factor, factor) + x.shape[ax + 1:]
    xs = x.data.reshape(split)
    if mode == "max":
        idx = np.argmax(xs, axis=ax + 1)
        out = np.take_along_axis(xs, np.expand_dims(idx, ax + 1), axis=ax + 1)
        out = np.squeeze(out, axis=ax + 1)

        def vjp(g):
            full = np.zeros(split, dtype=g.dtype)
            np.put_along_axis(full, np.expand_dims(idx, ax + 1), np.expand_dims(g, ax + 1),
                              axis=ax + 1)
            return (full.reshape(x.shape),)
    elif mode == "mean":
        out = xs.mean(axis=ax + 1)

        def vjp(g):
            full = np.broadcast_to(np.expand_dims(g, ax + 1) / factor, split)
            return (np.ascontiguousarray(full).reshape(x.shape),)
    else:
        raise ValueError(f"unknown pooling mode {mode!r}")
    return make_result(f"pool_over_axis_{mode}", np.ascontiguousarray(out), (x,), vjp)


def _bilinear_matrix(n_in: int, factor: int, dtype) -> np.ndarray:
    # half-pixel centres: src = (dst + 0.5) / factor - 0.5, clamped to the edge
    n_out = n_in * factor
    src = (np.arange(n_out) + 0.5) / factor - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    m = np.zeros((n_out, n_in), dtype=np.float64)
    m[np.arange(n_out), lo] += 1.0 - frac
    m[np.arange(n_out), hi] += frac
    return m.astype(dtype)


def upsample2d(x, factor: int = 2, mode: str = "nearest") -> Tensor:
    x = as_tensor(x)
    if factor < 1:
        raise DimensionError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return reshape(x, x.shape)
    b, c, h, w = x.shape
    if mode == "nearest":
        out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)

        def vjp(g):
            return (g.reshape(b, c, h, factor, w, factor).sum(axis=(3, 5)),)
    elif mode == "bilinear":
        mh = _bilinear_matrix(h, factor, x.dtype)
        mw = _bilinear_matrix(w, factor, x.dtype)
        out = np.einsum("ij,bcjk,lk->bcil", mh, x.data, mw, optimize=True)

        def vjp(g):
            return (np.einsum("ij,bcil,lk->bcjk", mh, g, mw, optimize=True),)
    else:
        raise ValueError(f"unknown upsample mode {mode!r}")
    return make_result(f"upsample2d_{mode}", np.ascontiguousarray(out), (x,), vjp)
