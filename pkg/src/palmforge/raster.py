"""Pixel rasters, sprite transforms, alpha compositing and opaque extents.

A raster is a (height, width, 4) uint8 numpy array holding straight
(non-premultiplied) RGBA. All operations are pure: inputs are never
mutated, and equal inputs give bit-identical outputs regardless of which
kernel backend is active.

Transform semantics (fixed so outputs are reproducible):
  * order is scale, then flips, then rotation
  * scale and rotation resample bilinearly; scaling clamps edge taps,
    rotation treats out-of-source taps as fully transparent
  * scaled dimensions round half-up; the rotation canvas is the ceiling of
    the rotated corner bounding box (with a 1e-9 guard against float fuzz
    at exact right angles)
  * the result is trimmed to the tight extent of pixels with alpha > 0
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from PIL import Image

from palmforge import kernels
from palmforge.errors import (
    DegenerateTransformError,
    EmptySpriteError,
    OutOfBoundsError,
    ValidationError,
)

PNG_COMPRESS_LEVEL = 6  # pinned so two runs of one environment emit identical bytes
_CEIL_EPS = 1e-9


class PixelBox(NamedTuple):
    """Inclusive top-left corner plus size, in pixels."""

    x0: int
    y0: int
    w: int
    h: int


@dataclass(frozen=True)
class Transform:
    """Rotation angle in degrees, scale factor, and per-axis flips."""

    angle: float = 0.0
    scale: float = 1.0
    flip_h: bool = False
    flip_v: bool = False

    def __post_init__(self):
        object.__setattr__(self, "angle", float(self.angle) % 360.0)
        if not 0.0 < self.scale <= 8.0:
            raise ValidationError(f"scale must be in (0, 8], got {self.scale}")


@dataclass(frozen=True)
class Sprite:
    """An RGBA cut-out with a class label and a provenance id."""

    pixels: np.ndarray
    class_name: str
    source_id: str

    def __post_init__(self):
        require_raster(self.pixels)
        if not np.any(self.pixels[:, :, 3] > 0):
            raise EmptySpriteError(f"sprite {self.source_id!r} is fully transparent")

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]


def require_raster(arr):
    """Validate the (h, w, 4) uint8 contract; raises ValidationError."""
    if not isinstance(arr, np.ndarray):
        raise ValidationError(f"raster must be a numpy array, got {type(arr).__name__}")
    if arr.dtype != np.uint8:
        raise ValidationError(f"raster dtype must be uint8, got {arr.dtype}")
    if arr.ndim != 3 or arr.shape[2] != 4:
        raise ValidationError(f"raster shape must be (h, w, 4), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"raster must be at least 1x1, got {arr.shape}")


def new_raster(width, height, rgba=(0, 0, 0, 255)):
    """Create a solid-color raster."""
    out = np.empty((height, width, 4), dtype=np.uint8)
    out[:, :] = rgba
    return out


def alpha_extent(arr):
    """Tight PixelBox around alpha > 0, or None if fully transparent."""
    mask = arr[:, :, 3] > 0
    cols = np.flatnonzero(mask.any(axis=0))
    if cols.size == 0:
        return None
    rows = np.flatnonzero(mask.any(axis=1))
    x0, x1 = int(cols[0]), int(cols[-1])
    y0, y1 = int(rows[0]), int(rows[-1])
    return PixelBox(x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def opaque_extent(sprite: Sprite) -> PixelBox:
    """Smallest pixel box containing every pixel with alpha > 0."""
    box = alpha_extent(sprite.pixels)
    if box is None:
        raise EmptySpriteError(f"sprite {sprite.source_id!r} is fully transparent")
    return box


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def apply_transform(sprite: Sprite, t: Transform) -> Sprite:
    """Scale, flip and rotate a sprite; output is trimmed to its opaque extent.

    Raises DegenerateTransformError when the scaled size rounds to zero, and
    EmptySpriteError in the pathological case where resampling leaves no
    pixel with alpha > 0.
    """
    arr = sprite.pixels
    if t.scale != 1.0:
        out_w = _round_half_up(arr.shape[1] * t.scale)
        out_h = _round_half_up(arr.shape[0] * t.scale)
        if out_w < 1 or out_h < 1:
            raise DegenerateTransformError(
                f"scale {t.scale} collapses {sprite.source_id!r} to {out_w}x{out_h}"
            )
        arr = kernels.resize_bilinear(np.ascontiguousarray(arr), out_w, out_h)
    if t.flip_h:
        arr = arr[:, ::-1, :]
    if t.flip_v:
        arr = arr[::-1, :, :]
    if t.angle != 0.0:
        theta = math.radians(t.angle)
        cos_t = math.cos(theta)
        sin_t = math.sin(theta)
        h, w = arr.shape[:2]
        out_w = math.ceil(w * abs(cos_t) + h * abs(sin_t) - _CEIL_EPS)
        out_h = math.ceil(w * abs(sin_t) + h * abs(cos_t) - _CEIL_EPS)
        arr = kernels.rotate_bilinear(np.ascontiguousarray(arr), cos_t, sin_t, out_w, out_h)
    box = alpha_extent(arr)
    if box is None:
        raise EmptySpriteError(
            f"transform {t} left sprite {sprite.source_id!r} fully transparent"
        )
    arr = np.ascontiguousarray(arr[box.y0:box.y0 + box.h, box.x0:box.x0 + box.w])
    return Sprite(pixels=arr, class_name=sprite.class_name, source_id=sprite.source_id)


def composite(bg: np.ndarray, sprite: Sprite, x0: int, y0: int) -> np.ndarray:
    """Source-over blend of a sprite onto a copy of bg at top-left (x0, y0)."""
    require_raster(bg)
    h, w = sprite.pixels.shape[:2]
    if x0 < 0 or y0 < 0 or x0 + w > bg.shape[1] or y0 + h > bg.shape[0]:
        raise OutOfBoundsError(
            f"sprite {sprite.source_id!r} ({w}x{h} at {x0},{y0}) exceeds "
            f"background {bg.shape[1]}x{bg.shape[0]}"
        )
    out = bg.copy()
    kernels.blend_over(out, np.ascontiguousarray(sprite.pixels), x0, y0)
    return out


def load_raster(path) -> np.ndarray:
    """Read a PNG or JPEG into an RGBA raster."""
    with Image.open(path) as img:
        return np.array(img.convert("RGBA"), dtype=np.uint8)


def load_sprite(path, class_name, source_id=None) -> Sprite:
    """Read a sprite PNG; requires an alpha channel, trims to opaque extent."""
    with Image.open(path) as img:
        if img.mode not in ("RGBA", "LA", "PA") and "transparency" not in img.info:
            raise ValidationError(f"sprite {path} has no alpha channel (mode {img.mode})")
        arr = np.array(img.convert("RGBA"), dtype=np.uint8)
    box = alpha_extent(arr)
    if box is None:
        raise EmptySpriteError(f"sprite {path} is fully transparent")
    arr = np.ascontiguousarray(arr[box.y0:box.y0 + box.h, box.x0:box.x0 + box.w])
    if source_id is None:
        import os

        source_id = os.path.splitext(os.path.basename(str(path)))[0]
    return Sprite(pixels=arr, class_name=class_name, source_id=source_id)


def save_png(arr: np.ndarray, path) -> None:
    """Write a raster as RGBA PNG with a pinned compression level."""
    require_raster(arr)
    Image.fromarray(arr, "RGBA").save(path, format="PNG", compress_level=PNG_COMPRESS_LEVEL)
