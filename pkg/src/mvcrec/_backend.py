"""Kernel backend selection.

Set MVCREC_BACKEND=numpy to force the pure-numpy fallback, =numba to require
the compiled kernels; anything else (or unset) picks numba when importable.
"""

from __future__ import annotations

import os

_kernels = None
_name = None


def _resolve():
    choice = os.environ.get("MVCREC_BACKEND", "auto").lower()
    if choice == "numpy":
        from . import _kernels_numpy as mod
        return mod, "numpy"
    if choice == "numba":
        from . import _kernels_numba as mod
        return mod, "numba"
    try:
        from . import _kernels_numba as mod
        return mod, "numba"
    except ImportError:
        from . import _kernels_numpy as mod
        return mod, "numpy"


def kernels():
    global _kernels, _name
    if _kernels is None:
        _kernels, _name = _resolve()
    return _kernels


def backend_name():
    kernels()
    return _name
