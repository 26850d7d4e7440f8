"""Kernel backend selection.

The compiled Cython module is used when it was built and importable;
otherwise the numpy implementation is used. Setting ``LUBA_PURE_PYTHON=1``
forces the fallback.
"""
import os

from . import _pykernels as python

compiled = None
if os.environ.get("LUBA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

kernels = compiled if compiled is not None else python
BACKEND = "cython" if compiled is not None else "python"
