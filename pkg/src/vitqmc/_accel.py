"""Optional numba acceleration.

Set ``VITQMC_DISABLE_NUMBA=1`` to force the pure-numpy kernels. ``VITQMC_NUM_THREADS``
caps the numba thread pool.
"""
import os

_DISABLED = os.environ.get("VITQMC_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - depends on environment
    numba = None
    NUMBA_ENABLED = False


def njit(fn=None, **kwargs):
    """``numba.njit(cache=True)`` when numba is usable, otherwise the identity."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if numba is None:
            return f
        return numba.njit(**kwargs)(f)

    if fn is None:
        return wrap
    return wrap(fn)


def set_num_threads(n=None):
    if n is None:
        env = os.environ.get("VITQMC_NUM_THREADS")
        n = int(env) if env else None
    if n is None or numba is None:
        return
    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
