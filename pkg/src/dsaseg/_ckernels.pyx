# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``dsaseg._pykernels``."""
import numpy as np
cimport cython

ctypedef fused real:
    float
    double


def _im2col(real[:, :, :, ::1] xp, real[:, ::1] cols, int k, int stride):
    cdef Py_ssize_t b = xp.shape[0], c = xp.shape[1]
    cdef Py_ssize_t ho = (xp.shape[2] - k) // stride + 1
    cdef Py_ssize_t wo = (xp.shape[3] - k) // stride + 1
    cdef Py_ssize_t n, y, x, ch, i, j, row, col
    with nogil:
        for n in range(b):
            for y in range(ho):
                for x in range(wo):
                    row = (n * ho + y) * wo + x
                    col = 0
                    for ch in range(c):
                        for i in range(k):
                            for j in range(k):
                                cols[row, col] = xp[n, ch, y * stride + i, x * stride + j]
                                col += 1


def _col2im(real[:, ::1] cols, real[:, :, :, ::1] out, int k, int stride):
    cdef Py_ssize_t b = out.shape[0], c = out.shape[1]
    cdef Py_ssize_t ho = (out.shape[2] - k) // stride + 1
    cdef Py_ssize_t wo = (out.shape[3] - k) // stride + 1
    cdef Py_ssize_t n, y, x, ch, i, j, row, col
    with nogil:
        for n in range(b):
            for y in range(ho):
                for x in range(wo):
                    row = (n * ho + y) * wo + x
                    col = 0
                    for ch in range(c):
                        for i in range(k):
                            for j in range(k):
                                out[n, ch, y * stride + i, x * stride + j] += cols[row, col]
                                col += 1


def im2col(xp, int k, int stride):
    xp = np.ascontiguousarray(xp)
    b, c, hp, wp = xp.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    cols = np.empty((b * ho * wo, c * k * k), dtype=xp.dtype)
    _im2col(xp, cols, k, stride)
    return cols


def col2im(cols, padded_shape, int k, int stride):
    cols = np.ascontiguousarray(cols)
    out = np.zeros(padded_shape, dtype=cols.dtype)
    _col2im(cols, out, k, stride)
    return out


def _maxpool_fwd(real[:, :, :, ::1] x, real[:, :, :, ::1] out, long long[:, :, :, ::1] idx, int win):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t ho = out.shape[2], wo = out.shape[3]
    cdef Py_ssize_t n, ch, y, xx, i, j
    cdef long long best_i
    cdef real best, v
    with nogil:
        for n in range(b):
            for ch in range(c):
                for y in range(ho):
                    for xx in range(wo):
                        best = x[n, ch, y * win, xx * win]
                        best_i = 0
                        for i in range(win):
                            for j in range(win):
                                v = x[n, ch, y * win + i, xx * win + j]
                                if v > best:
                                    best = v
                                    best_i = i * win + j
                        out[n, ch, y, xx] = best
                        idx[n, ch, y, xx] = best_i


def _maxpool_bwd(real[:, :, :, ::1] grad, long long[:, :, :, ::1] idx, real[:, :, :, ::1] dx, int win):
    cdef Py_ssize_t b = grad.shape[0], c = grad.shape[1]
    cdef Py_ssize_t ho = grad.shape[2], wo = grad.shape[3]
    cdef Py_ssize_t n, ch, y, xx
    cdef long long t
    with nogil:
        for n in range(b):
            for ch in range(c):
                for y in range(ho):
                    for xx in range(wo):
                        t = idx[n, ch, y, xx]
                        dx[n, ch, y * win + t // win, xx * win + t % win] = grad[n, ch, y, xx]


def maxpool2d_forward(x, int window):
    x = np.ascontiguousarray(x)
    b, c, h, w = x.shape
    out = np.empty((b, c, h // window, w // window), dtype=x.dtype)
    idx = np.empty(out.shape, dtype=np.int64)
    _maxpool_fwd(x, out, idx, window)
    return out, idx


def maxpool2d_backward(grad, idx, input_shape, int window):
    grad = np.ascontiguousarray(grad)
    dx = np.zeros(input_shape, dtype=grad.dtype)
    _maxpool_bwd(grad, np.ascontiguousarray(idx, dtype=np.int64), dx, window)
    return dx


cdef int _zs_pass(unsigned char[:, ::1] img, unsigned char[:, ::1] kill, int step) nogil:
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t y, x
    cdef int p2, p3, p4, p5, p6, p7, p8, p9, nb, tr, m1, m2
    cdef int changed = 0
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            kill[y, x] = 0
            if img[y, x] == 0:
                continue
            p2 = img[y - 1, x]
            p3 = img[y - 1, x + 1]
            p4 = img[y, x + 1]
            p5 = img[y + 1, x + 1]
            p6 = img[y + 1, x]
            p7 = img[y + 1, x - 1]
            p8 = img[y, x - 1]
            p9 = img[y - 1, x - 1]
            nb = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
            if nb < 2 or nb > 6:
                continue
            tr = ((p2 == 0 and p3 == 1) + (p3 == 0 and p4 == 1) + (p4 == 0 and p5 == 1)
                  + (p5 == 0 and p6 == 1) + (p6 == 0 and p7 == 1) + (p7 == 0 and p8 == 1)
                  + (p8 == 0 and p9 == 1) + (p9 == 0 and p2 == 1))
            if tr != 1:
                continue
            if step == 0:
                m1 = p2 * p4 * p6
                m2 = p4 * p6 * p8
            else:
                m1 = p2 * p4 * p8
                m2 = p2 * p6 * p8
            if m1 == 0 and m2 == 0:
                kill[y, x] = 1
                changed = 1
    if changed:
        for y in range(1, h - 1):
            for x in range(1, w - 1):
                if kill[y, x]:
                    img[y, x] = 0
    return changed


def zhang_suen(mask):
    cdef unsigned char[:, ::1] img = np.ascontiguousarray(
        np.pad(np.asarray(mask) != 0, 1), dtype=np.uint8)
    cdef unsigned char[:, ::1] kill = np.zeros_like(np.asarray(img))
    cdef int a, b
    while True:
        a = _zs_pass(img, kill, 0)
        b = _zs_pass(img, kill, 1)
        if not a and not b:
            break
    return np.asarray(img)[1:-1, 1:-1].copy()
