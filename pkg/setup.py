"""Build script: compiles the optional state-space kernel extension.

The package works without the extension (a NumPy fallback is selected at
import time); building it makes likelihood evaluation fast enough for the
Monte Carlo study. Build in place with:

    python setup.py build_ext --inplace
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
                "ebmfit.ssm._kernel_cy",
                ["src/ebmfit/ssm/_kernel_cy.pyx"],
                include_dirs=[numpy.get_include()],
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
except ImportError:
    # No Cython available: install pure-Python only.
    pass

setup(ext_modules=ext_modules)
