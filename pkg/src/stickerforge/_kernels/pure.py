"""Pure-NumPy reference implementations of the per-candidate hot kernels.

The compiled core in ``_core.pyx`` mirrors these exactly. Interpolation runs
in float64 with identical association so both backends produce bit-identical
uint8 output for the resize/composite kernels.
"""

import numpy as np


def _axis_coords(src_len, dst_len):
    s = (np.arange(dst_len, dtype=np.float64) + 0.5) * (src_len / dst_len) - 0.5
    np.clip(s, 0.0, src_len - 1.0, out=s)
    i0 = np.floor(s).astype(np.int64)
    f = s - i0
    i1 = np.minimum(i0 + 1, src_len - 1)
    return i0, i1, f


def resize_bilinear_rgb8(src, out_w, out_h):
    """Bilinearly resample an (h, w, 3) uint8 image to (out_h, out_w, 3)."""
    h, w = src.shape[:2]
    x0, x1, fx = _axis_coords(w, out_w)
    y0, y1, fy = _axis_coords(h, out_h)
    p = src.astype(np.float64)
    fx = fx[None, :, None]
    top = (1.0 - fx) * p[y0][:, x0] + fx * p[y0][:, x1]
    bot = (1.0 - fx) * p[y1][:, x0] + fx * p[y1][:, x1]
    fy = fy[:, None, None]
    v = (1.0 - fy) * top + fy * bot
    return np.floor(v + 0.5).astype(np.uint8)


def composite_resize_rgb8(src, rects, out_w, out_h):
    """Overwrite rects (n x [x0, y0, x1, y1, value]) then resample.

    Equivalent to painting each rectangle onto a copy of ``src`` in order and
    running :func:`resize_bilinear_rgb8` on the result.
    """
    rects = np.asarray(rects, dtype=np.int64).reshape(-1, 5)
    if len(rects):
        src = src.copy()
        for gx0, gy0, gx1, gy1, val in rects:
            src[gy0:gy1, gx0:gx1] = val
    return resize_bilinear_rgb8(src, out_w, out_h)


def conv2d_valid(x, w, b, stride=1):
    """Valid (unpadded) 2-D convolution of one CHW float32 image."""
    c, _, _ = x.shape
    f, _, kh, kw = w.shape
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    oh, ow = win.shape[1], win.shape[2]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(oh * ow, c * kh * kw)
    out = cols @ w.reshape(f, -1).T
    out += b
    return np.ascontiguousarray(out.T.reshape(f, oh, ow), dtype=np.float32)


def maxpool2(x):
    """2x2 max pooling with stride 2 on a CHW float32 image (floor dims)."""
    c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    pooled = x[:, : h2 * 2, : w2 * 2].reshape(c, h2, 2, w2, 2).max(axis=(2, 4))
    return np.ascontiguousarray(pooled, dtype=np.float32)
