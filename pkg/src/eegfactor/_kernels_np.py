"""Pure-numpy kernels for the hot operations (valid cross-correlation, average pooling).

Patch extraction uses stride tricks + one contiguous copy, the contraction
itself goes through BLAS. The compiled extension (``_fastkern``) provides the
same gather/scatter entry points; whichever is active is decided in
``backend``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, kh, kw, sh, sw):
    """x: [B,C,H,W] -> patches [B*Ho*Wo, C*kh*kw] (row-major over B,Ho,Wo)."""
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    # win: [B,C,Ho,Wo,kh,kw] -> [B,Ho,Wo,C,kh,kw]
    b, c, ho, wo = win.shape[:4]
    patches = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    return patches.reshape(b * ho * wo, c * kh * kw), ho, wo


def col2im(cols, x_shape, kh, kw, sh, sw, ho, wo):
    """Scatter-add patch gradients back to input layout. Inverse-adjoint of im2col."""
    b, c, _, _ = x_shape
    out = np.zeros(x_shape, dtype=np.float64)
    colst = cols.reshape(b, ho, wo, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += colst[:, :, :, :, i, j]
    return out


def _is_spatial_gemm(x, w, stride):
    # kernel spans the full height, width 1, no striding: conv == one GEMM per item
    cout, cin, kh, kw = w.shape
    return kh == x.shape[2] and kw == 1 and stride == (1, 1)


def conv_spatial_forward(x, w, b):
    bsz, cin, h, wdt = x.shape
    cout = w.shape[0]
    wm = w.reshape(cout, cin * h)
    y = np.matmul(wm[None], x.reshape(bsz, cin * h, wdt))
    if b is not None:
        y += b[:, None]
    return y.reshape(bsz, cout, 1, wdt)


def conv_spatial_backward(x, w, gy):
    bsz, cin, h, wdt = x.shape
    cout = w.shape[0]
    wm = w.reshape(cout, cin * h)
    g3 = gy.reshape(bsz, cout, wdt)
    xm = x.reshape(bsz, cin * h, wdt)
    gx = np.matmul(wm.T[None], g3).reshape(x.shape)
    gw = np.matmul(g3, xm.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    gb = g3.sum(axis=(0, 2))
    return gx, gw, gb


def conv2d_forward(x, w, b, stride):
    if _is_spatial_gemm(x, w, stride):
        return conv_spatial_forward(x, w, b)
    sh, sw = stride
    cout, cin, kh, kw = w.shape
    patches, ho, wo = im2col(x, kh, kw, sh, sw)
    y = patches @ w.reshape(cout, cin * kh * kw).T
    if b is not None:
        y += b
    return np.ascontiguousarray(y.reshape(x.shape[0], ho, wo, cout).transpose(0, 3, 1, 2))


def conv2d_backward(x, w, stride, gy):
    if _is_spatial_gemm(x, w, stride):
        return conv_spatial_backward(x, w, gy)
    # patches are recomputed rather than cached: caching them across a full
    # training graph costs hundreds of MB at the reference geometry
    sh, sw = stride
    cout, cin, kh, kw = w.shape
    patches, _, _ = im2col(x, kh, kw, sh, sw)
    b_, _, ho, wo = gy.shape
    gym = np.ascontiguousarray(gy.transpose(0, 2, 3, 1)).reshape(b_ * ho * wo, cout)
    gw = (gym.T @ patches).reshape(w.shape)
    gb = gym.sum(axis=0)
    gcols = gym @ w.reshape(cout, cin * kh * kw)
    gx = col2im(gcols, x.shape, kh, kw, sh, sw, ho, wo)
    return gx, gw, gb


def avgpool_forward(x, kernel, stride):
    kh, kw = kernel
    sh, sw = stride
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    return win.mean(axis=(-2, -1))


def avgpool_backward(x_shape, kernel, stride, gy):
    kh, kw = kernel
    sh, sw = stride
    _, _, ho, wo = gy.shape
    g = gy / float(kh * kw)
    gx = np.zeros(x_shape, dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += g
    return gx
