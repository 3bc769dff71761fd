"""Build script for the optional compiled raster kernels.

The package works without the extension (a NumPy implementation is selected
at import time), so a failed compile downgrades to the pure build instead of
aborting the install. Set PALMFORGE_PURE=1 to skip compilation outright.

-ffp-contract=off keeps the C arithmetic bit-identical to the NumPy fallback:
both backends evaluate the same float64 expression trees, and fused
multiply-adds would break that equivalence.
"""

import os

from setuptools import Extension, setup


def _extensions():
    if os.environ.get("PALMFORGE_PURE") == "1":
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "palmforge._kernels",
        ["src/palmforge/_kernels.pyx"],
        extra_compile_args=["-O2", "-ffp-contract=off"],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=_extensions())
