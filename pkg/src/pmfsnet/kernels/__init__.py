"""Convolution kernel dispatch.

`conv_forward`, `conv_backward_input`, and `conv_backward_weight` point at the
numba or numpy implementation depending on the active backend. Both share the
(C, *spatial) channels-first layout and identical semantics; a test asserts
they agree to float64 roundoff.
"""

from ..backend import using_numba
from . import _numpy

if using_numba():
    from . import _numba as _impl
else:
    _impl = _numpy

out_extent = _numpy.out_extent
conv_forward = _impl.conv_forward
conv_backward_input = _impl.conv_backward_input
conv_backward_weight = _impl.conv_backward_weight
