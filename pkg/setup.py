"""Build the optional Cython kernel; the package falls back to numpy without it."""
import os
import sys

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PROPRIETY_KIT_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        sys.stderr.write("Cython/numpy unavailable; installing pure-Python kernels only\n")
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "propriety_kit._kernels_c",
                    ["src/propriety_kit/_kernels_c.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
