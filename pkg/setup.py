"""Builds the optional compiled kernel extension.

The package works without it (a pure-numpy fallback is selected at import);
build with `pip install -e . --no-build-isolation` or
`python setup.py build_ext --inplace`.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "compass.kernels._ckern",
                ["src/compass/kernels/_ckern.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )

setup(ext_modules=extensions)
