"""Numba switch shared by every hot kernel.

Set ``CRNSIM_DISABLE_NUMBA=1`` to run the same kernels as plain Python.
Results are bit-identical either way; only speed differs.
"""
import os

_FLAG = os.environ.get("CRNSIM_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("1", "true", "yes", "on")


def jit(fn):
    """Compile ``fn`` with numba in nopython mode, or return it untouched."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


def backend():
    return "numba" if USE_NUMBA else "python"
