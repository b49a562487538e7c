"""Build hook for the optional compiled kernels.

Without Cython (or with ``CUSPLAB_NO_EXT=1``) the package installs pure
Python and falls back to ``cusplab._pykernels`` at import.
"""

import os

from setuptools import Extension, setup


def extensions():
    if os.environ.get("CUSPLAB_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension("cusplab._ckernels", ["src/cusplab/_ckernels.pyx"], extra_compile_args=["-O3"])
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions())
