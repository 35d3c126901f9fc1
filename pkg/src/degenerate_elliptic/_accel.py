"""Optional numba acceleration for the sequential inner loops.

Set ``DEGENERATE_ELLIPTIC_NO_NUMBA=1`` before import to run every kernel as
plain Python/numpy. The jitted and interpreted paths execute the same source,
so their results agree to rounding.
"""

import os

_DISABLE = os.environ.get("DEGENERATE_ELLIPTIC_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLE:
        raise ImportError("numba disabled by DEGENERATE_ELLIPTIC_NO_NUMBA")
    from numba import njit as _numba_njit

    NUMBA_ENABLED = True
except ImportError:
    _numba_njit = None
    NUMBA_ENABLED = False


def njit(func=None, **kwargs):
    """``numba.njit`` when available and enabled, identity decorator otherwise.

    The undecorated function is always reachable as ``.py_func`` so tests and
    benchmarks can compare both paths in one process.
    """
    kwargs.setdefault("cache", False)

    def wrap(f):
        if NUMBA_ENABLED:
            return _numba_njit(**kwargs)(f)
        f.py_func = f
        return f

    if func is not None:
        return wrap(func)
    return wrap
