# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled patch gather/scatter and pooling kernels.

Same entry points as ``_kernels_np``; the matrix contraction itself still goes
through BLAS via numpy, the compiled code removes the python/stride-trick
overhead of patch extraction, scatter-add, and window averaging.
"""

import numpy as np

cimport numpy as cnp

from . import _kernels_np

cnp.import_array()


def _temporal_forward(x, w, b):
    """Cin=1, kH=1, stride 1: direct correlation along the last axis."""
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t bsz = xv.shape[0], h = xv.shape[2], wdt = xv.shape[3]
    cdef Py_ssize_t f = wv.shape[0], k = wv.shape[3]
    cdef Py_ssize_t wo = wdt - k + 1
    y = np.empty((bsz, f, h, wo), dtype=np.float64)
    cdef double[:, :, :, ::1] yv = y
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t ib, ic, fi, ki, t
    cdef double wk, bias
    cdef double* xrow
    cdef double* yrow
    for ib in range(bsz):
        for ic in range(h):
            xrow = &xv[ib, 0, ic, 0]
            for fi in range(f):
                yrow = &yv[ib, fi, ic, 0]
                bias = bv[fi]
                for t in range(wo):
                    yrow[t] = bias
                for ki in range(k):
                    wk = wv[fi, 0, 0, ki]
                    for t in range(wo):
                        yrow[t] += wk * xrow[t + ki]
    return y


def _temporal_backward(x, w, gy):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, :, :, ::1] gv = np.ascontiguousarray(gy, dtype=np.float64)
    cdef Py_ssize_t bsz = xv.shape[0], h = xv.shape[2], wdt = xv.shape[3]
    cdef Py_ssize_t f = wv.shape[0], k = wv.shape[3]
    cdef Py_ssize_t wo = wdt - k + 1
    gx = np.zeros((bsz, 1, h, wdt), dtype=np.float64)
    gw = np.zeros((f, 1, 1, k), dtype=np.float64)
    gb = np.zeros(f, dtype=np.float64)
    cdef double[:, :, :, ::1] gxv = gx
    cdef double[:, :, :, ::1] gwv = gw
    cdef double[::1] gbv = gb
    wrev = np.ascontiguousarray(w[:, 0, 0, ::-1])
    cdef double[:, ::1] wrv = wrev
    gpad_arr = np.zeros(wo + 2 * (k - 1), dtype=np.float64)
    cdef double[::1] gpadv = gpad_arr
    cdef Py_ssize_t ib, ic, fi, ki, t
    cdef double acc
    cdef double* xrow
    cdef double* grow
    cdef double* gxrow
    cdef double* wr
    cdef double* gpad
    gpad = &gpadv[0]
    for ib in range(bsz):
        for ic in range(h):
            xrow = &xv[ib, 0, ic, 0]
            gxrow = &gxv[ib, 0, ic, 0]
            for fi in range(f):
                grow = &gv[ib, fi, ic, 0]
                wr = &wrv[fi, 0]
                acc = 0.0
                for t in range(wo):
                    acc += grow[t]
                gbv[fi] += acc
                # d(input): full correlation with the reversed kernel, on a
                # zero-padded copy so the inner loop has fixed length k
                for t in range(wo):
                    gpad[t + k - 1] = grow[t]
                for t in range(wdt):
                    acc = 0.0
                    for ki in range(k):
                        acc += wr[ki] * gpad[t + ki]
                    gxrow[t] += acc
                for ki in range(k):
                    acc = 0.0
                    for t in range(wo):
                        acc += grow[t] * xrow[t + ki]
                    gwv[fi, 0, 0, ki] += acc
    return gx, gw, gb


def im2col(x, int kh, int kw, int sh, int sw):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t b = xv.shape[0], c = xv.shape[1], h = xv.shape[2], w = xv.shape[3]
    cdef Py_ssize_t ho = (h - kh) // sh + 1
    cdef Py_ssize_t wo = (w - kw) // sw + 1
    out = np.empty((b * ho * wo, c * kh * kw), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t ib, ic, io, jo, i, j, row, col
    for ib in range(b):
        for io in range(ho):
            for jo in range(wo):
                row = (ib * ho + io) * wo + jo
                for ic in range(c):
                    for i in range(kh):
                        col = (ic * kh + i) * kw
                        for j in range(kw):
                            ov[row, col + j] = xv[ib, ic, io * sh + i, jo * sw + j]
    return out, ho, wo


def col2im(cols, x_shape, int kh, int kw, int sh, int sw, Py_ssize_t ho, Py_ssize_t wo):
    cdef double[:, ::1] cv = np.ascontiguousarray(cols, dtype=np.float64)
    out = np.zeros(x_shape, dtype=np.float64)
    cdef double[:, :, :, ::1] ov = out
    cdef Py_ssize_t b = ov.shape[0], c = ov.shape[1]
    cdef Py_ssize_t ib, ic, io, jo, i, j, row, col
    for ib in range(b):
        for io in range(ho):
            for jo in range(wo):
                row = (ib * ho + io) * wo + jo
                for ic in range(c):
                    for i in range(kh):
                        col = (ic * kh + i) * kw
                        for j in range(kw):
                            ov[ib, ic, io * sh + i, jo * sw + j] += cv[row, col + j]
    return out


def conv2d_forward(x, w, b, stride):
    if _kernels_np._is_spatial_gemm(x, w, stride):
        return _kernels_np.conv_spatial_forward(x, w, b)
    if w.shape[1] == 1 and w.shape[2] == 1 and stride == (1, 1):
        return _temporal_forward(x, w, b)
    cdef int sh = stride[0], sw = stride[1]
    cout = w.shape[0]
    patches, ho, wo = im2col(x, w.shape[2], w.shape[3], sh, sw)
    y = patches @ w.reshape(cout, -1).T
    if b is not None:
        y += b
    return np.ascontiguousarray(y.reshape(x.shape[0], ho, wo, cout).transpose(0, 3, 1, 2))


def conv2d_backward(x, w, stride, gy):
    if _kernels_np._is_spatial_gemm(x, w, stride):
        return _kernels_np.conv_spatial_backward(x, w, gy)
    if w.shape[1] == 1 and w.shape[2] == 1 and stride == (1, 1):
        return _temporal_backward(x, w, gy)
    cdef int sh = stride[0], sw = stride[1]
    cout = w.shape[0]
    kh, kw = w.shape[2], w.shape[3]
    patches, ho, wo = im2col(x, kh, kw, sh, sw)
    gym = np.ascontiguousarray(gy.transpose(0, 2, 3, 1)).reshape(-1, cout)
    gw = (gym.T @ patches).reshape(w.shape)
    gb = gym.sum(axis=0)
    gcols = gym @ w.reshape(cout, -1)
    gx = col2im(gcols, x.shape, kh, kw, sh, sw, ho, wo)
    return gx, gw, gb


def avgpool_forward(x, kernel, stride):
    cdef int kh = kernel[0], kw = kernel[1], sh = stride[0], sw = stride[1]
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t b = xv.shape[0], c = xv.shape[1], h = xv.shape[2], w = xv.shape[3]
    cdef Py_ssize_t ho = (h - kh) // sh + 1
    cdef Py_ssize_t wo = (w - kw) // sw + 1
    out = np.empty((b, c, ho, wo), dtype=np.float64)
    cdef double[:, :, :, ::1] ov = out
    cdef double inv = 1.0 / (kh * kw)
    cdef double acc
    cdef Py_ssize_t ib, ic, io, jo, i, j
    for ib in range(b):
        for ic in range(c):
            for io in range(ho):
                for jo in range(wo):
                    acc = 0.0
                    for i in range(kh):
                        for j in range(kw):
                            acc += xv[ib, ic, io * sh + i, jo * sw + j]
                    ov[ib, ic, io, jo] = acc * inv
    return out


def avgpool_backward(x_shape, kernel, stride, gy):
    cdef int kh = kernel[0], kw = kernel[1], sh = stride[0], sw = stride[1]
    cdef double[:, :, :, ::1] gv = np.ascontiguousarray(gy, dtype=np.float64)
    gx = np.zeros(x_shape, dtype=np.float64)
    cdef double[:, :, :, ::1] ov = gx
    cdef Py_ssize_t b = gv.shape[0], c = gv.shape[1], ho = gv.shape[2], wo = gv.shape[3]
    cdef double inv = 1.0 / (kh * kw)
    cdef double g
    cdef Py_ssize_t ib, ic, io, jo, i, j
    for ib in range(b):
        for ic in range(c):
            for io in range(ho):
                for jo in range(wo):
                    g = gv[ib, ic, io, jo] * inv
                    for i in range(kh):
                        for j in range(kw):
                            ov[ib, ic, io * sh + i, jo * sw + j] += g
    return gx
