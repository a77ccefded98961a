"""Build the optional Cython core; the package works without it."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("LANDINGOPT_NO_EXT", "") != "1":
    try:
        import numpy as np
        import scipy  # noqa: F401  (cython_blas pxd)
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "landingopt._kernels",
                    ["src/landingopt/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": 3},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
