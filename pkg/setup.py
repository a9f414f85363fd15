"""Build script: compiles the optional Cython scheduling kernel.

If Cython is unavailable the package installs without the extension and
falls back to the pure-Python kernel at import time (slicelab.sim.kernel).
"""
from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "slicelab.sim._kernel_cy",
                ["src/slicelab/sim/_kernel_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # -ffp-contract=off: no FMA contraction, so float results
                # match the pure-Python kernel bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
