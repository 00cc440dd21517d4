import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; kspl falls back to numpy kernels
    cythonize = None


def ext_modules():
    if cythonize is None or os.environ.get("KSPL_NO_EXT"):
        return []
    ext = Extension(
        "kspl._philox",
        sources=["src/kspl/_philox.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": 3})


setup(ext_modules=ext_modules())
