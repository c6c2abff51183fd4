import os

import numpy as np
from setuptools import setup
from setuptools.extension import Extension

# Compiled kernel core is optional: the package falls back to the NumPy
# backend if the extension is absent (PQLAB_NO_EXT=1 skips the build).
ext_modules = []
if not os.environ.get("PQLAB_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "pqlab._kernels_cy",
                ["src/pqlab/_kernels_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
