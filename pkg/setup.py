"""Build script: compiles the optional fast-kernel extension.

The package works without the extension (a pure-numpy backend is selected
at import time), so the extension build is marked optional and any
compilation failure degrades to the fallback instead of failing install.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext = Extension(
        "groupdance._kernels._ckern",
        ["src/groupdance/_kernels/_ckern.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-funroll-loops", "-fopenmp"],
        extra_link_args=["-fopenmp"],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level="3")

setup(ext_modules=ext_modules)
