"""Selects the Philox kernel implementation at import time.

The compiled extension is used when it was built; setting ``KSPL_PURE_PYTHON=1``
forces the numpy fallback. Both produce identical words.
"""
import os

from kspl import _philox_py

if os.environ.get("KSPL_PURE_PYTHON", "") not in ("", "0"):
    kernels = _philox_py
    BACKEND = "python"
else:
    try:
        from kspl import _philox as kernels  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        kernels = _philox_py
        BACKEND = "python"

words = kernels.words
uniforms = kernels.uniforms
