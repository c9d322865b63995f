"""Numba toggle.

Set ``UAVROUTE_DISABLE_NUMBA=1`` to route every hot kernel through its
pure-numpy implementation instead of the compiled loop version.
"""
import os

NUMBA_DISABLED = os.environ.get("UAVROUTE_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not NUMBA_DISABLED


def njit(func):
    """Compile ``func`` with numba when available, otherwise return it unchanged."""
    if numba is None:
        return func
    return numba.njit(cache=True)(func)


def select(compiled, fallback):
    return compiled if USE_NUMBA else fallback
