# cython: boundscheck=False, wraparound=False, language_level=3
"""Compiled implementation of the raster hot loops.

Scalar twin of _kernels_py.py: same float64 expression trees in the same
order, so outputs are bit-identical to the NumPy backend (compiled with
-ffp-contract=off to keep it that way). See _kernels_py.py for the shared
conventions; keep the two files in lockstep.
"""

from libc.math cimport floor

import numpy as np


def blend_over(unsigned char[:, :, ::1] dst, const unsigned char[:, :, ::1] src,
               Py_ssize_t x0, Py_ssize_t y0):
    """Source-over blend src onto dst in place, top-left corner at (x0, y0)."""
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t r, c, k, dr, dc
    cdef double sa, ba, t, oa, outc
    with nogil:
        for r in range(h):
            dr = y0 + r
            for c in range(w):
                if src[r, c, 3] == 0:
                    continue
                dc = x0 + c
                sa = src[r, c, 3] / 255.0
                ba = dst[dr, dc, 3] / 255.0
                t = ba * (1.0 - sa)
                oa = sa + t
                for k in range(3):
                    outc = (src[r, c, k] * sa + dst[dr, dc, k] * t) / oa
                    dst[dr, dc, k] = <unsigned char>floor(outc + 0.5)
                dst[dr, dc, 3] = <unsigned char>floor(oa * 255.0 + 0.5)


def resize_bilinear(const unsigned char[:, :, ::1] src, Py_ssize_t out_w, Py_ssize_t out_h):
    """Bilinear resize to (out_h, out_w, 4); edge taps clamp to the border."""
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef double scale_x = w / <double>out_w
    cdef double scale_y = h / <double>out_h
    out = np.empty((out_h, out_w, 4), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] o = out
    cdef Py_ssize_t x, y, k, x0c, x1c, y0c, y1c
    cdef double sx, sy, fgx, fgy, fx, fy, a, b, v
    with nogil:
        for y in range(out_h):
            sy = (y + 0.5) * scale_y - 0.5
            fgy = floor(sy)
            fy = sy - fgy
            y0c = _clamp(<Py_ssize_t>fgy, h)
            y1c = _clamp(<Py_ssize_t>fgy + 1, h)
            for x in range(out_w):
                sx = (x + 0.5) * scale_x - 0.5
                fgx = floor(sx)
                fx = sx - fgx
                x0c = _clamp(<Py_ssize_t>fgx, w)
                x1c = _clamp(<Py_ssize_t>fgx + 1, w)
                for k in range(4):
                    a = src[y0c, x0c, k] * (1.0 - fx) + src[y0c, x1c, k] * fx
                    b = src[y1c, x0c, k] * (1.0 - fx) + src[y1c, x1c, k] * fx
                    v = a * (1.0 - fy) + b * fy
                    o[y, x, k] = <unsigned char>floor(v + 0.5)
    return out


def rotate_bilinear(const unsigned char[:, :, ::1] src, double cos_t, double sin_t,
                    Py_ssize_t out_w, Py_ssize_t out_h):
    """Rotate src about its center onto an (out_h, out_w) canvas."""
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef double cxs = w * 0.5
    cdef double cys = h * 0.5
    cdef double cxo = out_w * 0.5
    cdef double cyo = out_h * 0.5
    out = np.empty((out_h, out_w, 4), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] o = out
    cdef Py_ssize_t x, y, k, x0, y0
    cdef double dx, dy, sx, sy, gx, gy, fgx, fgy, fx, fy
    cdef double p00, p01, p10, p11, a, b, v
    with nogil:
        for y in range(out_h):
            dy = (y + 0.5) - cyo
            for x in range(out_w):
                dx = (x + 0.5) - cxo
                sx = cxs + (dx * cos_t + dy * sin_t)
                sy = cys + (dy * cos_t - dx * sin_t)
                gx = sx - 0.5
                gy = sy - 0.5
                fgx = floor(gx)
                fgy = floor(gy)
                x0 = <Py_ssize_t>fgx
                y0 = <Py_ssize_t>fgy
                fx = gx - fgx
                fy = gy - fgy
                for k in range(4):
                    p00 = _tap(src, y0, x0, k, h, w)
                    p01 = _tap(src, y0, x0 + 1, k, h, w)
                    p10 = _tap(src, y0 + 1, x0, k, h, w)
                    p11 = _tap(src, y0 + 1, x0 + 1, k, h, w)
                    a = p00 * (1.0 - fx) + p01 * fx
                    b = p10 * (1.0 - fx) + p11 * fx
                    v = a * (1.0 - fy) + b * fy
                    o[y, x, k] = <unsigned char>floor(v + 0.5)
    return out


cdef inline Py_ssize_t _clamp(Py_ssize_t i, Py_ssize_t n) nogil:
    if i < 0:
        return 0
    if i > n - 1:
        return n - 1
    return i


cdef inline double _tap(const unsigned char[:, :, ::1] src, Py_ssize_t yi, Py_ssize_t xi,
                        Py_ssize_t k, Py_ssize_t h, Py_ssize_t w) nogil:
    if xi < 0 or xi >= w or yi < 0 or yi >= h:
        return 0.0
    return <double>src[yi, xi, k]
