"""Kernel backend and worker-pool configuration.

The hot per-element kernels exist twice: a numba ``@njit`` build and a
vectorized pure-numpy build.  ``MSHDG_BACKEND`` selects between them
(``numba`` is the default whenever numba imports; set ``MSHDG_BACKEND=numpy``
to force the fallback).  ``MSHDG_THREADS`` caps the number of concurrent
subdomain workers (0 or unset means auto).
"""

import os
import warnings

_CHOICES = ("numba", "numpy")


def _detect_backend() -> str:
    requested = os.environ.get("MSHDG_BACKEND", "").strip().lower()
    if requested and requested not in _CHOICES:
        raise ValueError(
            f"MSHDG_BACKEND={requested!r} not understood; use one of {_CHOICES}"
        )
    if requested == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if requested == "numba":
            warnings.warn("numba requested but not importable; using numpy kernels")
        return "numpy"
    return "numba"


BACKEND = _detect_backend()


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return BACKEND


def worker_count(n_tasks: int) -> int:
    """Number of worker threads to use for ``n_tasks`` independent jobs."""
    raw = os.environ.get("MSHDG_THREADS", "0").strip()
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"MSHDG_THREADS={raw!r} is not an integer") from None
    if cap < 0:
        raise ValueError("MSHDG_THREADS must be >= 0")
    if cap == 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_tasks))
