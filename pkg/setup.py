"""Build hook for the optional compiled kernels.

The extension is optional: if Cython or a C compiler is missing the package
installs without it and the numpy fallback in ``shockratio._kernels_py`` is
used at import time.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("SHOCKRATIO_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "shockratio._kernels",
                    ["src/shockratio/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": 3},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
