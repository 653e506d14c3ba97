"""Numba switch.

Set ``BOSEFP_DISABLE_NUMBA=1`` to run the pure-numpy kernels instead of the
compiled ones. ``BOSEFP_THREADS`` caps the worker count used by sweeps.
"""
from __future__ import annotations

import os

_disabled = os.environ.get("BOSEFP_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes")

try:
    import numba as _numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _disabled


def njit(*args, **kwargs):
    """``numba.njit(cache=True, nogil=True, error_model="numpy")`` when numba is usable, else a no-op decorator.

    The numpy error model drops the ZeroDivisionError checks on every float
    division. Besides matching the fallback semantics (inf/nan), this matters for
    speed: those raise paths stop numba from pruning array refcount traffic in
    inner loops, which otherwise costs several atomic operations per cell.
    """
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    kwargs.setdefault("error_model", "numpy")
    return _numba.njit(*args, **kwargs)


def max_threads() -> int:
    raw = os.environ.get("BOSEFP_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)
