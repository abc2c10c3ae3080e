"""Wall-clock comparison of the two convolution kernel backends.

The numba kernels and the pure-numpy shift-and-matmul path implement the
same contract; this times both on representative shapes so the speedup (or
lack of it, on tiny inputs) is visible. Numbers are wall-clock and
machine-dependent; correctness parity is asserted separately in the tests.
"""

from __future__ import annotations

import time

import numpy as np

from .backend import using_numba
from .kernels import _numpy

CASES = (
    ("2d 32ch 64x64 k3", (32, 64, 64), (32, 32, 3, 3)),
    ("2d 64ch 32x32 k3", (64, 32, 32), (64, 64, 3, 3)),
    ("3d 16ch 24^3 k3", (16, 24, 24, 24), (16, 16, 3, 3, 3)),
)


def _time(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def time_backends(seed=0, repeats=3):
    """-> list of printable result lines."""
    lines = ["conv kernel timing (best of %d, forward pass):" % repeats]
    backends = [("numpy", _numpy)]
    if using_numba():
        from .kernels import _numba

        backends.append(("numba", _numba))
    rng = np.random.default_rng(seed)
    for name, xshape, wshape in CASES:
        nd = len(xshape) - 1
        x = rng.normal(size=xshape)
        w = rng.normal(size=wshape)
        stride = (1,) * nd
        pad = (1,) * nd
        dil = (1,) * nd
        times = {}
        for bname, impl in backends:
            fn = lambda: impl.conv_forward(x, w, stride, pad, dil, 1)
            fn()  # warm up (jit compile on first call)
            times[bname] = _time(fn, repeats)
        row = f"  {name:22s} " + "  ".join(
            f"{b}: {t * 1e3:8.2f} ms" for b, t in times.items()
        )
        if len(times) == 2:
            row += f"  speedup: {times['numpy'] / times['numba']:.1f}x"
        lines.append(row)
    if not using_numba():
        lines.append("  (numba backend unavailable or disabled; set "
                     "PMFS_BACKEND=numba to compare)")
    return lines


if __name__ == "__main__":
    for line in time_backends():
        print(line)
