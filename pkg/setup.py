"""Build script for the optional compiled propagation kernel.

The package is fully functional without the extension (a NumPy fallback is
selected at import time); building it just makes ensemble propagation much
faster. ``pip install -e . --no-build-isolation`` compiles it in place.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "stommelbox._kernels._fast",
                ["src/stommelbox/_kernels/_fast.pyx"],
                include_dirs=[numpy.get_include()],
                # -ffp-contract=off keeps the C arithmetic bit-identical to
                # the NumPy fallback (no FMA contraction).
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
