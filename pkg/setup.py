"""Build the optional compiled dynamics kernel.

The package works without it (``locogym.dynamics`` falls back to the pure-Python
kernels), so a missing compiler or Cython only downgrades speed.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("LOCOGYM_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "locogym.dynamics._ckernels",
                    ["src/locogym/dynamics/_ckernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
