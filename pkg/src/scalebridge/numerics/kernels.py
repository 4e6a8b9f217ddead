"""Hot-kernel dispatch.

The compiled extension is preferred; the numpy module is used when it is not
built or when ``SCALEBRIDGE_KERNELS=python``. Both expose the same three
functions and are cross-checked in the test suite.

The compiled convolution is a direct loop. It beats the numpy im2col path
(which hands the work to BLAS) only on small layers, so wide convolutions
are routed to numpy even when the extension is available.
"""
import os

from . import _pykernels as python

try:
    from . import _ckernels as compiled
except ImportError:  # extension not built
    compiled = None

if compiled is not None and os.environ.get("SCALEBRIDGE_KERNELS", "") != "python":
    _impl = compiled
    BACKEND = "compiled"
else:
    _impl = python
    BACKEND = "python"

# multiply-accumulates per output tap (C_out * C_in * H * W) above which BLAS wins
DIRECT_CONV_LIMIT = 20000


def _conv_impl(x, w):
    if _impl is python or w.shape[0] * w.shape[1] * x.shape[1] * x.shape[2] > DIRECT_CONV_LIMIT:
        return python
    return _impl


def conv3x3_forward(x, w, b=None):
    return _conv_impl(x, w).conv3x3_forward(x, w, b)


def conv3x3_backward(x, w, gy):
    return _conv_impl(x, w).conv3x3_backward(x, w, gy)


linear_assignment = _impl.linear_assignment

__all__ = [
    "BACKEND",
    "DIRECT_CONV_LIMIT",
    "compiled",
    "python",
    "conv3x3_forward",
    "conv3x3_backward",
    "linear_assignment",
]
