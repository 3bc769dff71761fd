"""NumPy implementation of the raster hot loops.

This is the fallback used when the compiled extension (palmforge._kernels)
is unavailable. Both backends evaluate the same float64 expression trees in
the same order, so their outputs are bit-identical; tests/test_kernels.py
checks that exhaustively. Any change to a formula here must be mirrored in
_kernels.pyx.

Conventions shared by every function:
  * rasters are (height, width, 4) uint8 arrays, straight (non-premultiplied)
    RGBA
  * continuous coordinates place pixel (x, y)'s center at (x + 0.5, y + 0.5)
  * 8-bit quantization rounds half-up: floor(value + 0.5)
"""

import numpy as np


def blend_over(dst, src, x0, y0):
    """Source-over blend src onto dst in place, top-left corner at (x0, y0).

    Pixels where src alpha is 0 leave dst untouched (bit-identical), which
    is what makes blending a fully transparent sprite a no-op.
    """
    h, w = src.shape[:2]
    region = dst[y0:y0 + h, x0:x0 + w]
    s = src.astype(np.float64)
    b = region.astype(np.float64)
    sa = s[:, :, 3] / 255.0
    ba = b[:, :, 3] / 255.0
    t = ba * (1.0 - sa)
    oa = sa + t
    # oa > 0 wherever sa > 0; the masked write below never uses the dummy 1.0
    safe = np.where(oa > 0.0, oa, 1.0)
    out = np.empty_like(b)
    for c in range(3):
        out[:, :, c] = (s[:, :, c] * sa + b[:, :, c] * t) / safe
    out[:, :, 3] = oa * 255.0
    quantized = np.floor(out + 0.5).astype(np.uint8)
    mask = src[:, :, 3] > 0
    region[mask] = quantized[mask]


def resize_bilinear(src, out_w, out_h):
    """Bilinear resize to (out_h, out_w, 4); edge taps clamp to the border."""
    h, w = src.shape[:2]
    scale_x = w / out_w
    scale_y = h / out_h
    sx = (np.arange(out_w, dtype=np.float64) + 0.5) * scale_x - 0.5
    sy = (np.arange(out_h, dtype=np.float64) + 0.5) * scale_y - 0.5
    fgx = np.floor(sx)
    fgy = np.floor(sy)
    x0 = fgx.astype(np.intp)
    y0 = fgy.astype(np.intp)
    fx = sx - fgx
    fy = sy - fgy
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    s = src.astype(np.float64)
    p00 = s[y0c[:, None], x0c[None, :]]
    p01 = s[y0c[:, None], x1c[None, :]]
    p10 = s[y1c[:, None], x0c[None, :]]
    p11 = s[y1c[:, None], x1c[None, :]]
    wx0 = (1.0 - fx)[None, :, None]
    wx1 = fx[None, :, None]
    wy0 = (1.0 - fy)[:, None, None]
    wy1 = fy[:, None, None]
    a = p00 * wx0 + p01 * wx1
    b = p10 * wx0 + p11 * wx1
    v = a * wy0 + b * wy1
    return np.floor(v + 0.5).astype(np.uint8)


def rotate_bilinear(src, cos_t, sin_t, out_w, out_h):
    """Rotate src about its center onto an (out_h, out_w) canvas.

    cos_t/sin_t and the canvas size are precomputed by the caller so both
    backends receive identical scalars. Sample points falling outside the
    source contribute fully transparent (0, 0, 0, 0) taps.
    """
    h, w = src.shape[:2]
    cxs = w * 0.5
    cys = h * 0.5
    cxo = out_w * 0.5
    cyo = out_h * 0.5
    dx = (np.arange(out_w, dtype=np.float64) + 0.5) - cxo
    dy = (np.arange(out_h, dtype=np.float64) + 0.5) - cyo
    sx = cxs + (dx[None, :] * cos_t + dy[:, None] * sin_t)
    sy = cys + (dy[:, None] * cos_t - dx[None, :] * sin_t)
    gx = sx - 0.5
    gy = sy - 0.5
    fgx = np.floor(gx)
    fgy = np.floor(gy)
    x0 = fgx.astype(np.intp)
    y0 = fgy.astype(np.intp)
    fx = gx - fgx
    fy = gy - fgy
    s = src.astype(np.float64)

    def tap(yi, xi):
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        vals = s[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        vals[~valid] = 0.0
        return vals

    p00 = tap(y0, x0)
    p01 = tap(y0, x0 + 1)
    p10 = tap(y0 + 1, x0)
    p11 = tap(y0 + 1, x0 + 1)
    wx0 = (1.0 - fx)[:, :, None]
    wx1 = fx[:, :, None]
    wy0 = (1.0 - fy)[:, :, None]
    wy1 = fy[:, :, None]
    a = p00 * wx0 + p01 * wx1
    b = p10 * wx0 + p11 * wx1
    v = a * wy0 + b * wy1
    return np.floor(v + 0.5).astype(np.uint8)
