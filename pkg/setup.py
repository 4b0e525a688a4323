from setuptools import setup, Extension

import numpy as np

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled splat kernel is an optional speedup: the package falls back to
# the pure-numpy kernel at import time if the extension is missing.
ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "implicit_forge._splat_cy",
                ["src/implicit_forge/_splat_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O2"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3str",
    )

setup(ext_modules=ext_modules)
