"""Per-pixel kernels for the built-in functions.

The compiled extension is preferred; set ``STREAMFN_PURE_PYTHON=1`` to force
the pure-Python implementation. ``BACKEND`` names the one in use.
"""

import os

from . import _pykernels as python

compiled = None
if os.environ.get("STREAMFN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

if compiled is not None:
    grayscale_rgb = compiled.grayscale_rgb
    count_diff = compiled.count_diff
    BACKEND = "cython"
else:
    grayscale_rgb = python.grayscale_rgb
    count_diff = python.count_diff
    BACKEND = "python"

__all__ = ["BACKEND", "compiled", "count_diff", "grayscale_rgb", "python"]
