"""Backend selection for the numeric kernels.

The convolution kernels exist in two flavours: numba-compiled loops and a
pure-numpy path built on shift-and-matmul. The active backend is chosen once
at import time from the PMFS_BACKEND environment variable ("numba" or
"numpy"); numba is the default when it imports cleanly. PMFS_NUM_THREADS
caps the numba thread pool.
"""

import os

_backend = os.environ.get("PMFS_BACKEND", "").strip().lower()

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

if _backend not in ("", "numba", "numpy"):
    raise RuntimeError(f"PMFS_BACKEND must be 'numba' or 'numpy', got {_backend!r}")
if _backend == "numba" and not _HAVE_NUMBA:
    raise RuntimeError("PMFS_BACKEND=numba but numba is not importable")
if _backend == "":
    _backend = "numba" if _HAVE_NUMBA else "numpy"

if _backend == "numba":
    _threads = os.environ.get("PMFS_NUM_THREADS", "").strip()
    if _threads:
        numba.set_num_threads(max(1, int(_threads)))


def active_backend() -> str:
    return _backend


def using_numba() -> bool:
    return _backend == "numba"
