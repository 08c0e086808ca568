"""Backend selection for the compiled kernels.

Set ``IDS_DISABLE_NUMBA=1`` before import to force the pure-numpy path.
"""
import os

_FALSY = {"", "0", "false", "no", "off"}


def _numba_requested():
    return os.environ.get("IDS_DISABLE_NUMBA", "").strip().lower() in _FALSY


try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a soft dependency
    _numba = None

USE_NUMBA = _numba is not None and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(func=None, **options):
    """Compile with numba when enabled, otherwise return the function untouched.

    The original Python function stays reachable as ``.py_func`` in both
    cases. Usable bare (``@njit``) or with numba options.
    """
    if func is None:
        return lambda f: njit(f, **options)
    if not USE_NUMBA:
        func.py_func = func
        return func
    return _numba.njit(cache=True, nogil=True, **options)(func)


def thread_cap(default=1):
    """Worker-thread cap from ``IDS_THREADS``."""
    raw = os.environ.get("IDS_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return default
    return max(1, n)
