"""Forward layer primitives and their reverse-mode gradients.

Convolution is cross-correlation (no kernel flip) without bias; batch
normalization is the frozen-statistics, shift-only form (beta trainable,
moving mean/variance constants); dropout uses inverted scaling. Output
extents: valid padding gives floor((in - k) / stride) + 1, same padding
gives ceil(in / stride) with TensorFlow-style asymmetric zero padding.

The heavy data movement (patch gather/scatter, pooling) is delegated to
the active kernel backend; the arithmetic-dense matrix products run through
numpy's BLAS in both backends, so conv results are backend-independent.
"""

import numpy as np

from . import backend
from .errors import ShapeError
from .tensor import Tensor, record


def conv_output_extent(in_extent, k, stride, padding):
    """Spatial output extent for one axis."""
    if padding == "valid":
        if k > in_extent:
            return 0
        return (in_extent - k) // stride + 1
    if padding == "same":
        return -(-in_extent // stride)
    raise ValueError(f"padding must be 'valid' or 'same', got {padding!r}")


def same_pad_before(in_extent, k, stride):
    out = -(-in_extent // stride)
    total = max((out - 1) * stride + k - in_extent, 0)
    return total // 2


def _check_stride(stride):
    if int(stride) != stride or stride < 1:
        raise ValueError(f"stride must be a positive integer, got {stride!r}")
    return int(stride)


def _conv_geometry(h, w, kh, kw, stride, padding):
    if padding == "valid" and (kh > h or kw > w):
        raise ShapeError(
            f"valid padding needs kernel ({kh}x{kw}) <= input ({h}x{w})"
        )
    oh = conv_output_extent(h, kh, stride, padding)
    ow = conv_output_extent(w, kw, stride, padding)
    if oh <= 0 or ow <= 0:
        raise ShapeError(
            f"zero-size output: input {h}x{w}, kernel {kh}x{kw}, stride {stride}, {padding} padding"
        )
    if padding == "same":
        return oh, ow, same_pad_before(h, kh, stride), same_pad_before(w, kw, stride)
    return oh, ow, 0, 0


def conv2d(x, kernel, stride=1, padding="valid"):
    """2-D cross-correlation of NHWC ``x`` with an (kh, kw, C, F) kernel, no bias."""
    stride = _check_stride(stride)
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(
            f"conv2d needs rank-4 input and kernel, got {x.shape} and {kernel.shape}"
        )
    n, h, w, c = x.shape
    kh, kw, kc, f = kernel.shape
    if kc != c:
        raise ShapeError(
            f"kernel channels do not match input: kernel {tuple(kernel.shape)} vs input {tuple(x.shape)}"
        )
    if x.dtype != kernel.dtype:
        raise ShapeError(f"dtype mismatch: input {x.dtype.name} vs kernel {kernel.dtype.name}")
    oh, ow, pt, pl = _conv_geometry(h, w, kh, kw, stride, padding)

    kmat = kernel.data.reshape(kh * kw * c, f)
    patches = backend.im2col(x.data, kh, kw, stride, pt, pl, oh, ow)
    y = (patches @ kmat).reshape(n, oh, ow, f)

    def backward_fn(grad):
        dy = grad.reshape(n * oh * ow, f)
        if kernel.requires_grad:
            p = backend.im2col(x.data, kh, kw, stride, pt, pl, oh, ow)
            kernel.accumulate_grad((p.T @ dy).reshape(kh, kw, c, f))
        if x.requires_grad:
            dpatches = dy @ kmat.T
            x.accumulate_grad(backend.col2im(dpatches, x.shape, kh, kw, stride, pt, pl, oh, ow))

    return record(y, (x, kernel), backward_fn, "conv2d")


def pool2d(x, window, stride, mode, padding="valid"):
    """Square max/avg pooling; avg divides by the in-bounds cell count."""
    if int(window) != window or window < 1:
        raise ValueError(f"pool window must be a positive integer, got {window!r}")
    window = int(window)
    stride = _check_stride(stride)
    if mode not in ("max", "avg"):
        raise ValueError(f"pool mode must be 'max' or 'avg', got {mode!r}")
    if x.data.ndim != 4:
        raise ShapeError(f"pool2d needs rank-4 input, got {x.shape}")
    n, h, w, c = x.shape
    oh, ow, pt, pl = _conv_geometry(h, w, window, window, stride, padding)

    if mode == "max":
        y, idx = backend.maxpool_forward(x.data, window, stride, pt, pl, oh, ow)

        def backward_fn(grad):
            if x.requires_grad:
                x.accumulate_grad(backend.maxpool_backward(grad, idx, x.shape))

    else:
        y = backend.avgpool_forward(x.data, window, stride, pt, pl, oh, ow)

        def backward_fn(grad):
            if x.requires_grad:
                x.accumulate_grad(
                    backend.avgpool_backward(grad, x.shape, window, stride, pt, pl, oh, ow)
                )

    return record(y, (x,), backward_fn, f"{mode}pool2d")


def batchnorm(x, beta, moving_mean, moving_var, eps=1e-3):
    """Shift-only normalization with frozen statistics.

    y = (x - mean) / sqrt(var + eps) + beta, per channel. beta is the only
    trainable piece; the moving statistics never receive gradients.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"batchnorm needs rank-4 input, got {x.shape}")
    c = x.shape[3]
    for name, t in (("beta", beta), ("moving_mean", moving_mean), ("moving_var", moving_var)):
        if t.shape != (c,):
            raise ShapeError(f"{name} must have shape ({c},), got {tuple(t.shape)}")
        if t.dtype != x.dtype:
            raise ShapeError(f"dtype mismatch: input {x.dtype.name} vs {name} {t.dtype.name}")
    if np.any(moving_var.data < 0):
        raise ValueError("batchnorm moving variance must be non-negative")

    inv = 1.0 / np.sqrt(moving_var.data + np.asarray(eps, dtype=x.dtype))
    y = (x.data - moving_mean.data) * inv + beta.data

    def backward_fn(grad):
        if x.requires_grad:
            x.accumulate_grad(grad * inv)
        if beta.requires_grad:
            beta.accumulate_grad(grad.sum(axis=(0, 1, 2)))

    return record(y, (x, beta, moving_mean, moving_var), backward_fn, "batchnorm")


def dense(x, weights, bias):
    """Affine layer y = x @ W + b for (N, D) inputs."""
    if x.data.ndim != 2 or weights.data.ndim != 2 or bias.data.ndim != 1:
        raise ShapeError(
            f"dense needs (N,D) input, (D,U) weights, (U,) bias; got "
            f"{tuple(x.shape)}, {tuple(weights.shape)}, {tuple(bias.shape)}"
        )
    d, u = weights.shape
    if x.shape[1] != d or bias.shape[0] != u:
        raise ShapeError(
            f"dense dimension mismatch: input {tuple(x.shape)} vs weights "
            f"{tuple(weights.shape)} vs bias {tuple(bias.shape)}"
        )
    y = x.data @ weights.data + bias.data

    def backward_fn(grad):
        if x.requires_grad:
            x.accumulate_grad(grad @ weights.data.T)
        if weights.requires_grad:
            weights.accumulate_grad(x.data.T @ grad)
        if bias.requires_grad:
            bias.accumulate_grad(grad.sum(axis=0))

    return record(y, (x, weights, bias), backward_fn, "dense")


def relu(x):
    y = np.maximum(x.data, 0)

    def backward_fn(grad):
        if x.requires_grad:
            x.accumulate_grad(grad * (x.data > 0))

    return record(y, (x,), backward_fn, "relu")


def softmax(x):
    """Numerically stable softmax over the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward_fn(grad):
        if x.requires_grad:
            inner = (grad * y).sum(axis=-1, keepdims=True)
            x.accumulate_grad((grad - inner) * y)

    return record(y, (x,), backward_fn, "softmax")


def activation(x, kind):
    if kind == "relu":
        return relu(x)
    if kind == "softmax":
        return softmax(x)
    raise ValueError(f"unknown activation kind {kind!r}")


def concat_channels(parts):
    """Concatenate NHWC tensors along channels, argument order preserved."""
    parts = tuple(parts)
    if not parts:
        raise ShapeError("concat_channels needs at least one tensor")
    base = parts[0].shape
    for p in parts[1:]:
        if p.data.ndim != 4 or p.shape[:3] != base[:3]:
            raise ShapeError(
                f"concat parts disagree on N,H,W: {tuple(base)} vs {tuple(p.shape)}"
            )
    y = np.concatenate([p.data for p in parts], axis=3)
    offsets = np.cumsum([0] + [p.shape[3] for p in parts])

    def backward_fn(grad):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate_grad(grad[..., lo:hi])

    return record(y, parts, backward_fn, "concat")


def flatten(x):
    """(N, H, W, C) -> (N, H*W*C), preserving NHWC iteration order."""
    if x.data.ndim != 4:
        raise ShapeError(f"flatten needs rank-4 input, got {x.shape}")
    n = x.shape[0]
    y = np.ascontiguousarray(x.data).reshape(n, -1)

    def backward_fn(grad):
        if x.requires_grad:
            x.accumulate_grad(grad.reshape(x.shape))

    return record(y, (x,), backward_fn, "flatten")


def dropout(x, rate, training, rng=None):
    """Inverted dropout: zero with probability ``rate``, scale survivors."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate!r}")
    if not training:
        return x
    if rate == 0.0:
        multiplier = None
        y = x.data
    else:
        if rng is None:
            raise ValueError("dropout in training mode needs a seeded generator")
        keep = rng.random(x.shape) >= rate
        multiplier = keep.astype(x.dtype) / np.asarray(1.0 - rate, dtype=x.dtype)
        y = x.data * multiplier

    def backward_fn(grad):
        if x.requires_grad:
            x.accumulate_grad(grad if multiplier is None else grad * multiplier)

    return record(y, (x,), backward_fn, "dropout")
