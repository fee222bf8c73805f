import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("DCORBENCH_NO_EXT", "") in ("", "0"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "dcorbench.kernels._ckernels",
                ["src/dcorbench/kernels/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                # keep float results identical to the numpy fallback
                extra_compile_args=["-O2", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
