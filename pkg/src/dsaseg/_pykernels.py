"""Numpy implementations of the hot kernels.

These are the fallback used when the compiled extension ``dsaseg._ckernels``
is unavailable. Both backends must agree exactly; see ``tests/test_kernels.py``.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(xp, k, stride):
    """Unfold a padded (B, C, Hp, Wp) array into (B*Ho*Wo, C*k*k) rows."""
    b, c, hp, wp = xp.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    # win: (B, C, Ho, Wo, k, k) -> (B, Ho, Wo, C, k, k)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * k * k)
    return np.ascontiguousarray(cols)


def col2im(cols, padded_shape, k, stride):
    """Adjoint of :func:`im2col`: scatter-add rows back onto the padded canvas."""
    b, c, hp, wp = padded_shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    g = cols.reshape(b, ho, wo, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros(padded_shape, dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += g[:, :, i, j]
    return out


def maxpool2d_forward(x, window):
    """Non-overlapping max pooling; returns values and the in-window argmax.

    Ties resolve to the first element in row-major window order.
    """
    b, c, h, w = x.shape
    ho, wo = h // window, w // window
    blocks = x.reshape(b, c, ho, window, wo, window).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(b, c, ho, wo, window * window)
    idx = np.argmax(blocks, axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx.astype(np.int64)


def maxpool2d_backward(grad, idx, input_shape, window):
    b, c, h, w = input_shape
    ho, wo = h // window, w // window
    onehot = np.zeros((b, c, ho, wo, window * window), dtype=grad.dtype)
    np.put_along_axis(onehot, idx[..., None], grad[..., None], axis=-1)
    onehot = onehot.reshape(b, c, ho, wo, window, window).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(onehot.reshape(b, c, h, w))


def zhang_suen(mask):
    """Two-subiteration Zhang-Suen thinning of a 2-D binary mask.

    Pixels on the image border are thinned as if the image were surrounded
    by background.
    """
    img = np.pad(np.asarray(mask, dtype=np.uint8) != 0, 1).astype(np.uint8)
    while True:
        changed = False
        for step in (0, 1):
            c = img[1:-1, 1:-1]
            p2 = img[:-2, 1:-1]
            p3 = img[:-2, 2:]
            p4 = img[1:-1, 2:]
            p5 = img[2:, 2:]
            p6 = img[2:, 1:-1]
            p7 = img[2:, :-2]
            p8 = img[1:-1, :-2]
            p9 = img[:-2, :-2]
            ring = (p2, p3, p4, p5, p6, p7, p8, p9, p2)
            nb = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
            trans = np.zeros_like(c)
            for a, b in zip(ring[:-1], ring[1:]):
                trans += (a == 0) & (b == 1)
            if step == 0:
                m1 = p2 * p4 * p6
                m2 = p4 * p6 * p8
            else:
                m1 = p2 * p4 * p8
                m2 = p2 * p6 * p8
            kill = (c == 1) & (nb >= 2) & (nb <= 6) & (trans == 1) & (m1 == 0) & (m2 == 0)
            if kill.any():
                c[kill] = 0
                changed = True
        if not changed:
            break
    return img[1:-1, 1:-1].copy()
