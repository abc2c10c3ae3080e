"""The numba and numpy convolution kernels must agree to float64 roundoff."""

import numpy as np
import pytest

from pmfsnet.kernels import _numpy

numba_impl = pytest.importorskip("pmfsnet.kernels._numba")

CASES = [
    # (xshape, wshape, stride, pad, dilation, groups)
    ((3, 8, 8), (5, 3, 3, 3), 1, 1, 1, 1),
    ((6, 9, 7), (4, 6, 3, 3), 2, 1, 1, 1),
    ((4, 8, 8), (4, 1, 3, 3), 1, 2, 2, 4),          # depthwise, dilated
    ((2, 6, 6, 6), (3, 2, 3, 3, 3), 1, 1, 1, 1),
    ((4, 8, 6, 6), (6, 2, 2, 3, 2), 2, 0, 1, 2),    # grouped 3D, stride 2
]


@pytest.mark.parametrize("xshape,wshape,stride,pad,dil,groups", CASES)
def test_forward_and_backward_parity(rng, xshape, wshape, stride, pad, dil, groups):
    nd = len(xshape) - 1
    s, p, d = (stride,) * nd, (pad,) * nd, (dil,) * nd
    x = rng.normal(size=xshape)
    w = rng.normal(size=wshape)

    out_np = _numpy.conv_forward(x, w, s, p, d, groups)
    out_nb = numba_impl.conv_forward(x, w, s, p, d, groups)
    np.testing.assert_allclose(out_nb, out_np, rtol=1e-12, atol=1e-12)

    gout = rng.normal(size=out_np.shape)
    gx_np = _numpy.conv_backward_input(gout, w, xshape, s, p, d, groups)
    gx_nb = numba_impl.conv_backward_input(gout, w, xshape, s, p, d, groups)
    np.testing.assert_allclose(gx_nb, gx_np, rtol=1e-12, atol=1e-12)

    gw_np = _numpy.conv_backward_weight(gout, x, wshape, s, p, d, groups)
    gw_nb = numba_impl.conv_backward_weight(gout, x, wshape, s, p, d, groups)
    np.testing.assert_allclose(gw_nb, gw_np, rtol=1e-12, atol=1e-12)


def test_backend_env_selection():
    from pmfsnet import kernels
    from pmfsnet.backend import active_backend

    assert active_backend() in ("numba", "numpy")
    # the dispatched functions exist and are callable regardless of backend
    assert callable(kernels.conv_forward)
    assert callable(kernels.conv_backward_input)
    assert callable(kernels.conv_backward_weight)


def test_numpy_fallback_subprocess():
    """PMFS_BACKEND=numpy must select the pure-numpy path."""
    import subprocess
    import sys

    code = (
        "from pmfsnet.backend import active_backend; "
        "print(active_backend())"
    )
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={"PMFS_BACKEND": "numpy", "PATH": "/usr/bin:/bin"},
        capture_output=True,
        text=True,
    )
    assert out.stdout.strip() == "numpy"
