"""Lightweight multi-scale attention segmentation toolkit.

A numpy implementation of a three-stage dense-encoder segmentation network
with a polarized multi-scale attention bottleneck, plus the losses, metrics,
cost accounting, and CLI plumbing around it. Hot convolution kernels run on
numba when available; set PMFS_BACKEND=numpy to force the pure-numpy path.
"""

from .backend import active_backend
from .model import PMFSNet, PRESET_NAMES, ScalingConfig, preset
from .tensor import Tensor

__version__ = "0.1.0"

__all__ = [
    "PMFSNet",
    "PRESET_NAMES",
    "ScalingConfig",
    "Tensor",
    "active_backend",
    "preset",
    "__version__",
]
