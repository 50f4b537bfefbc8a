"""Kernel backend selection.

numba is used unless ``MORSEFLOW_DISABLE_NUMBA`` is set to a truthy value
(or numba itself is unavailable / ``NUMBA_DISABLE_JIT`` is set).
"""

import os

from . import _kernels_numpy

_TRUTHY = {"1", "true", "yes", "on"}


def _numba_requested():
    if os.environ.get("MORSEFLOW_DISABLE_NUMBA", "").strip().lower() in _TRUTHY:
        return False
    if os.environ.get("NUMBA_DISABLE_JIT", "").strip().lower() in _TRUTHY:
        return False
    return True


USE_NUMBA = False
if _numba_requested():
    try:
        from . import _kernels_numba as kernels

        USE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        kernels = _kernels_numpy
else:
    kernels = _kernels_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
