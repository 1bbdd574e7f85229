# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Must stay numerically in lockstep with pure.py:
the resize/composite kernels replicate its float64 arithmetic bit-for-bit;
the conv kernel may differ in accumulation order (tolerance-checked)."""

from libc.math cimport floor

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline double _sample(const unsigned char[:, :, ::1] src,
                           const long long[:, ::1] rects, Py_ssize_t nrects,
                           Py_ssize_t y, Py_ssize_t x, Py_ssize_t c) nogil:
    cdef Py_ssize_t i
    cdef double v = <double> src[y, x, c]
    for i in range(nrects):
        if rects[i, 0] <= x and x < rects[i, 2] and rects[i, 1] <= y and y < rects[i, 3]:
            v = <double> rects[i, 4]
    return v


cdef _resample(const unsigned char[:, :, ::1] src,
               const long long[:, ::1] rects,
               int out_w, int out_h):
    cdef Py_ssize_t sh = src.shape[0], sw = src.shape[1]
    cdef Py_ssize_t nrects = rects.shape[0]
    out_arr = np.empty((out_h, out_w, 3), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] out = out_arr
    cdef double sx_scale = (<double> sw) / out_w
    cdef double sy_scale = (<double> sh) / out_h
    cdef Py_ssize_t ox, oy, c, x0, x1, y0, y1
    cdef double sx, sy, fx, fy, p00, p01, p10, p11, v
    with nogil:
        for oy in range(out_h):
            sy = (oy + 0.5) * sy_scale - 0.5
            if sy < 0.0:
                sy = 0.0
            elif sy > sh - 1.0:
                sy = sh - 1.0
            y0 = <Py_ssize_t> floor(sy)
            fy = sy - y0
            y1 = y0 + 1
            if y1 > sh - 1:
                y1 = sh - 1
            for ox in range(out_w):
                sx = (ox + 0.5) * sx_scale - 0.5
                if sx < 0.0:
                    sx = 0.0
                elif sx > sw - 1.0:
                    sx = sw - 1.0
                x0 = <Py_ssize_t> floor(sx)
                fx = sx - x0
                x1 = x0 + 1
                if x1 > sw - 1:
                    x1 = sw - 1
                for c in range(3):
                    p00 = _sample(src, rects, nrects, y0, x0, c)
                    p01 = _sample(src, rects, nrects, y0, x1, c)
                    p10 = _sample(src, rects, nrects, y1, x0, c)
                    p11 = _sample(src, rects, nrects, y1, x1, c)
                    v = (1.0 - fy) * ((1.0 - fx) * p00 + fx * p01) \
                        + fy * ((1.0 - fx) * p10 + fx * p11)
                    out[oy, ox, c] = <unsigned char> floor(v + 0.5)
    return out_arr


_NO_RECTS = np.empty((0, 5), dtype=np.int64)


def resize_bilinear_rgb8(src, int out_w, int out_h):
    return _resample(np.ascontiguousarray(src), _NO_RECTS, out_w, out_h)


def composite_resize_rgb8(src, rects, int out_w, int out_h):
    rects = np.ascontiguousarray(np.asarray(rects, dtype=np.int64).reshape(-1, 5))
    return _resample(np.ascontiguousarray(src), rects, out_w, out_h)


def conv2d_valid(const float[:, :, ::1] x, const float[:, :, :, ::1] w,
                 const float[::1] b, int stride=1):
    # kernel-position-major loops keep the inner row contiguous so the
    # compiler can vectorize the multiply-accumulate
    cdef Py_ssize_t cin = x.shape[0], h = x.shape[1], wid = x.shape[2]
    cdef Py_ssize_t f = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = (h - kh) // stride + 1
    cdef Py_ssize_t ow = (wid - kw) // stride + 1
    out_arr = np.empty((f, oh, ow), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t fi, oy, ox, c, ky, kx
    cdef const float* xrow
    cdef float* orow
    cdef float wv
    with nogil:
        for fi in range(f):
            for oy in range(oh):
                orow = &out[fi, oy, 0]
                for ox in range(ow):
                    orow[ox] = b[fi]
                for c in range(cin):
                    for ky in range(kh):
                        xrow = &x[c, oy * stride + ky, 0]
                        for kx in range(kw):
                            wv = w[fi, c, ky, kx]
                            if stride == 1:
                                for ox in range(ow):
                                    orow[ox] += wv * xrow[kx + ox]
                            else:
                                for ox in range(ow):
                                    orow[ox] += wv * xrow[kx + ox * stride]
    return out_arr


def maxpool2(const float[:, :, ::1] x):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t h2 = h // 2, w2 = w // 2
    out_arr = np.empty((c, h2, w2), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t ci, oy, ox
    cdef float m, v
    with nogil:
        for ci in range(c):
            for oy in range(h2):
                for ox in range(w2):
                    m = x[ci, 2 * oy, 2 * ox]
                    v = x[ci, 2 * oy, 2 * ox + 1]
                    if v > m:
                        m = v
                    v = x[ci, 2 * oy + 1, 2 * ox]
                    if v > m:
                        m = v
                    v = x[ci, 2 * oy + 1, 2 * ox + 1]
                    if v > m:
                        m = v
                    out[ci, oy, ox] = m
    return out_arr
