"""Build script for the optional compiled kernel core.

The extension accelerates the per-candidate hot path (sticker compositing,
downscaling, CNN forward). If Cython or a C compiler is unavailable the
install falls back to the pure-NumPy kernels selected at import time.
"""

from setuptools import Extension, setup


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "stickerforge._kernels._core",
        ["src/stickerforge/_kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # contraction stays off (and no -ffast-math): the resize kernels must
        # stay bit-compatible with the IEEE float64 arithmetic of the NumPy
        # fallback
        extra_compile_args=["-O3", "-march=native", "-ffp-contract=off"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions())
