"""Selects the raster kernel backend at import time.

Prefers the compiled extension and falls back to the NumPy implementation.
Override with PALMFORGE_KERNELS=native|python|auto; "native" raises if the
extension is missing instead of silently degrading. The two backends are
bit-identical, so the choice only affects speed (see benchmarks/).
"""

import os

_choice = os.environ.get("PALMFORGE_KERNELS", "auto")
if _choice not in ("auto", "native", "python"):
    raise ImportError(f"PALMFORGE_KERNELS must be auto, native or python, got {_choice!r}")

if _choice == "python":
    from palmforge._kernels_py import blend_over, resize_bilinear, rotate_bilinear
    BACKEND = "python"
else:
    try:
        from palmforge._kernels import blend_over, resize_bilinear, rotate_bilinear
        BACKEND = "native"
    except ImportError:
        if _choice == "native":
            raise
        from palmforge._kernels_py import blend_over, resize_bilinear, rotate_bilinear
        BACKEND = "python"

__all__ = ["BACKEND", "blend_over", "resize_bilinear", "rotate_bilinear"]
