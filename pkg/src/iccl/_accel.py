"""Numba switch.

Set ``ICCL_DISABLE_NUMBA=1`` before importing :mod:`iccl` to run every hot
kernel through its pure-numpy twin instead of the jitted loop.
"""
import os

_FLAG = os.environ.get("ICCL_DISABLE_NUMBA", "").strip().lower()
NUMBA_ENABLED = _FLAG not in ("1", "true", "yes", "on")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_ENABLED = False


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    The jitted variants are always compiled on first call when numba is
    installed, so tests and the benchmark can compare both paths regardless
    of the env flag. The flag only decides which one the public API uses.
    """
    kwargs.setdefault("cache", True)
    if numba is None:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda fn: fn
    return numba.njit(*args, **kwargs)


def pick(jitted, fallback):
    return jitted if NUMBA_ENABLED else fallback
