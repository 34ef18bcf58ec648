"""Kernel backend selection.

The compiled extension is preferred. Setting ``DSASEG_PURE_PYTHON=1`` in the
environment forces the numpy fallback, as does a missing or broken build.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("DSASEG_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels


def get_backend(name=None):
    """Return the kernel module for ``name`` ("cython"/"python"), or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def im2col(xp, k, stride):
    return _impl.im2col(xp, k, stride)


def col2im(cols, padded_shape, k, stride):
    return _impl.col2im(cols, padded_shape, k, stride)


def maxpool2d_forward(x, window):
    return _impl.maxpool2d_forward(x, window)


def maxpool2d_backward(grad, idx, input_shape, window):
    return _impl.maxpool2d_backward(grad, idx, input_shape, window)


def zhang_suen(mask):
    return _impl.zhang_suen(mask)
