"""Build script for the optional compiled kernel.

The package works without the extension; ``approxtopk._backend`` falls back to
the numpy implementation when ``approxtopk._kernels`` cannot be imported.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("ATK_NO_EXT") != "1":
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
                    "approxtopk._kernels",
                    ["src/approxtopk/_kernels.pyx"],
                    depends=["src/approxtopk/topk_kernels.h"],
                    include_dirs=[np.get_include(), "src/approxtopk"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # no fast-math: NaN/inf ordering and float32 rounding must
                    # match the numpy path bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )

setup(ext_modules=ext_modules)
