"""Select the compiled kernels when available, else the numpy fallback.

Set ``CUSPLAB_BACKEND=python`` to force the fallback.
"""

import importlib
import os

from . import _pykernels


def load(name=None):
    """Return the kernel module named ``name`` ("cython" or "python").

    ``None`` picks the compiled module when it imports cleanly.
    """
    if name == "python":
        return _pykernels
    if name not in (None, "cython"):
        raise ValueError(f"unknown kernel backend {name!r}")
    try:
        return importlib.import_module("cusplab._ckernels")
    except ImportError:
        if name == "cython":
            raise
        return _pykernels


kernels = load("python" if os.environ.get("CUSPLAB_BACKEND", "").lower() == "python" else None)
BACKEND = kernels.NAME
