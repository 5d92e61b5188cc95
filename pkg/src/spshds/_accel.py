"""JIT switch for the numeric kernels.

Setting ``SPSHDS_NO_NUMBA=1`` (or running without numba installed) turns
``njit`` into a no-op so the kernels execute as plain Python over numpy
arrays. Both paths run the same source and produce the same floats.
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("SPSHDS_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _numba_njit

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - exercised through the env flag in a subprocess
    _numba_njit = None
    NUMBA_ENABLED = False


def njit(func=None, **kwargs):
    if NUMBA_ENABLED:
        opts = {"cache": True, "nogil": True, "error_model": "numpy"}
        opts.update(kwargs)
        if func is not None:
            return _numba_njit(**opts)(func)
        return _numba_njit(**opts)
    if func is not None:
        return func

    def wrapper(f):
        return f

    return wrapper


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "python"
