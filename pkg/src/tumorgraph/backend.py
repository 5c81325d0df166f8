"""Kernel backend selection.

The compiled Cython core is preferred when importable; otherwise the numpy
fallback is used. ``TUMORGRAPH_KERNELS=numpy|compiled`` forces a choice
(``compiled`` raises if the extension is missing). Both backends implement
the same contracts, so everything above this module is backend-agnostic.
"""

import os

import numpy as np

from . import kernels_numpy

try:
    from . import _kernels
except ImportError:
    _kernels = None

_forced = os.environ.get("TUMORGRAPH_KERNELS", "").strip().lower()
if _forced == "numpy":
    _impl = kernels_numpy
elif _forced == "compiled":
    if _kernels is None:
        raise ImportError(
            "TUMORGRAPH_KERNELS=compiled but the tumorgraph._kernels extension is not built"
        )
    _impl = _kernels
else:
    _impl = _kernels if _kernels is not None else kernels_numpy


def name():
    """Active backend, "compiled" or "numpy"."""
    return "compiled" if _impl is not kernels_numpy else "numpy"


def _c(a):
    return np.ascontiguousarray(a)


def im2col(x, kh, kw, stride, pad_top, pad_left, out_h, out_w):
    return _impl.im2col(_c(x), kh, kw, stride, pad_top, pad_left, out_h, out_w)


def col2im(dpatches, x_shape, kh, kw, stride, pad_top, pad_left, out_h, out_w):
    return _impl.col2im(_c(dpatches), tuple(x_shape), kh, kw, stride, pad_top, pad_left, out_h, out_w)


def maxpool_forward(x, window, stride, pad_top, pad_left, out_h, out_w):
    return _impl.maxpool_forward(_c(x), window, stride, pad_top, pad_left, out_h, out_w)


def maxpool_backward(dy, idx, x_shape):
    return _impl.maxpool_backward(_c(dy), _c(idx), tuple(x_shape))


def avgpool_forward(x, window, stride, pad_top, pad_left, out_h, out_w):
    return _impl.avgpool_forward(_c(x), window, stride, pad_top, pad_left, out_h, out_w)


def avgpool_backward(dy, x_shape, window, stride, pad_top, pad_left, out_h, out_w):
    return _impl.avgpool_backward(_c(dy), tuple(x_shape), window, stride, pad_top, pad_left, out_h, out_w)


def warp_bilinear(image, inverse, mode, cval):
    inv = np.ascontiguousarray(np.asarray(inverse, dtype=np.float64)[:2, :])
    return _impl.warp_bilinear(_c(image), inv, mode, float(cval))
