"""Kernel backend selection.

The compiled Cython kernels are used when the extension was built; the
pure-numpy module is the fallback.  Set DECAY_LADDER_PURE=1 to force the
numpy implementation regardless.
"""

import os

from . import _ladder_py

if os.environ.get("DECAY_LADDER_PURE", "").strip().lower() in ("1", "true", "yes"):
    _impl = _ladder_py
    BACKEND = "numpy"
else:
    try:
        from . import _ladder_cy as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _ladder_py
        BACKEND = "numpy"

run_trapezoid = _impl.run_trapezoid
run_rk4 = _impl.run_rk4

STATUS_OK = _ladder_py.STATUS_OK
STATUS_NONFINITE = _ladder_py.STATUS_NONFINITE
STATUS_UNDERFLOW = _ladder_py.STATUS_UNDERFLOW
