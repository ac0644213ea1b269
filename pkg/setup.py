"""Build the optional compiled propagation kernel.

If Cython or a C compiler is unavailable the package still installs and
falls back to the NumPy implementation.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("AEROCHANNEL_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension(
                "aerochannel._kernel",
                ["src/aerochannel/_kernel.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # no FMA contraction: results must match the NumPy fallback bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
