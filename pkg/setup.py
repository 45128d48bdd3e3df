"""Build script for the compiled kernel extension.

The package works without the extension (a pure-numpy fallback is selected
at import time); set TSNMF_SKIP_EXT=1 to install without compiling.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("TSNMF_SKIP_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "tsnmf._kernels",
                ["src/tsnmf/_kernels.pyx"],
                extra_compile_args=["-O3"],
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
