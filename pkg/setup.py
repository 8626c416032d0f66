"""Build script: compiles the optional Cython kernel extension.

The extension is a pure accelerator. If Cython or a C compiler is
unavailable the build falls back to a pure-Python install and the
package selects the interpreted kernels at import time.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "trapshuttle._kernels",
                ["src/trapshuttle/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
