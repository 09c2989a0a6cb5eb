"""Optional numba acceleration.

Set ``FORGETWIN_NO_NUMBA=1`` to force the pure-numpy kernels, e.g. for
debugging or to compare against the jitted path.
"""
import os

_disabled = os.environ.get("FORGETWIN_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _disabled:
        raise ImportError("numba disabled via FORGETWIN_NO_NUMBA")
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:
    _njit = None
    HAS_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAS_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn
