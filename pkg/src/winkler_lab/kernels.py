"""Kernel dispatch: compiled extension when importable, numpy fallback otherwise.

Set ``WINKLER_LAB_PURE=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
pair_sums = _kernels_py.pair_sums

if not os.environ.get("WINKLER_LAB_PURE"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        pair_sums = _compiled.pair_sums
        BACKEND = "cython"
