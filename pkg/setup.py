"""Build the optional compiled kernels.

When Cython or a C compiler is unavailable the package still installs; the
numpy kernels in ``dnurbs.core._kernels_py`` are used instead.
"""
import os
import sys

from setuptools import setup

ext_modules = []
if os.environ.get("DNURBS_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        print("dnurbs: Cython/numpy not found, skipping compiled kernels", file=sys.stderr)
    else:
        omp = [] if sys.platform == "darwin" else ["-fopenmp"]
        ext_modules = cythonize(
            [
                Extension(
                    "dnurbs.core._kernels",
                    ["src/dnurbs/core/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no FMA contraction: keeps sums identical to the numpy reference order
                    extra_compile_args=["-O3", "-ffp-contract=off"] + omp,
                    extra_link_args=omp,
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
        )

setup(ext_modules=ext_modules)
