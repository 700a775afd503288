"""Build script with an optional compiled kernel extension.

The package works without the extension (NumPy/SciPy fallbacks are
selected at import time); building it just makes the banded solves and
Gauss-Seidel sweeps faster. Set DEGDIFF_NO_EXT=1 to skip compilation.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("DEGDIFF_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "degdiff.kernels._ckernels",
                    ["src/degdiff/kernels/_ckernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
