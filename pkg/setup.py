"""Build the optional compiled kernels.

The Cython extension is skipped when Cython or a compiler is missing;
the package then runs on its numpy fallback.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("MVFLOW_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "mvflow._core._kernels",
                    ["src/mvflow/_core/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
