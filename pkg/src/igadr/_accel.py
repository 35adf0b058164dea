"""Backend selection for the numeric kernels.

Every hot kernel in :mod:`igadr.kernels` exists twice: a numba ``@njit``
version and a plain numpy version.  The active path is chosen at import time
from the ``IGADR_BACKEND`` environment variable (``numba`` or ``numpy``) and
can be switched at runtime with :func:`set_backend`, which is what the
benchmark script does.  Without numba installed the numpy path is forced.
"""

import os

try:
    import numba
    from numba import get_num_threads, prange

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # skip probing TBB first; old TBB builds only produce a warning
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAVE_NUMBA = False
    prange = range

    def get_num_threads():
        return 1


def njit(*args, **kwargs):
    """``numba.njit`` with caching on, or a no-op decorator without numba."""
    kwargs.setdefault("cache", True)
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def decorator(func):
        return func

    return decorator


def _initial_backend():
    name = os.environ.get("IGADR_BACKEND", "numba").strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"IGADR_BACKEND must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


_backend = _initial_backend()


def backend():
    return _backend


def use_numba():
    return _backend == "numba"


def set_backend(name):
    """Switch kernel dispatch; returns the previous backend name."""
    global _backend
    name = name.lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    previous, _backend = _backend, name
    return previous


def apply_thread_cap():
    """Honour ``IGA_THREADS`` for numba's threading layer."""
    cap = os.environ.get("IGA_THREADS")
    if not cap or not HAVE_NUMBA:
        return
    n = max(1, int(cap))
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
