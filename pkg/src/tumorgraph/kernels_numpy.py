"""Pure-numpy implementations of the hot kernels.

This is the fallback backend; `tumorgraph._kernels` (Cython) implements the
same functions with identical contracts. Callers pass fully resolved
geometry (output extents and top/left padding) so both backends share one
shape convention:

* patch matrices are laid out row-major as (n * out_h * out_w, kh * kw * c),
  feature order (kh, kw, c), matching a row-major reshape of an NHWC kernel;
* max-pool argmax indices are flat ``row * w + col`` into the unpadded input;
* average pooling divides by the count of in-bounds cells per window;
* the bilinear sampler uses nested lerps, which keeps each output inside the
  [min, max] hull of its four taps and is exact at integer coordinates.
"""

import numpy as np

COMPILED = False


def _pad_amounts(h, w, kh, kw, stride, pad_top, pad_left, out_h, out_w):
    pad_bottom = max(0, (out_h - 1) * stride + kh - h - pad_top)
    pad_right = max(0, (out_w - 1) * stride + kw - w - pad_left)
    return pad_bottom, pad_right


def im2col(x, kh, kw, stride, pad_top, pad_left, out_h, out_w):
    """Gather conv patches of ``x`` (n,h,w,c) into a (n*oh*ow, kh*kw*c) matrix."""
    n, h, w, c = x.shape
    pad_bottom, pad_right = _pad_amounts(h, w, kh, kw, stride, pad_top, pad_left, out_h, out_w)
    if pad_top or pad_left or pad_bottom or pad_right:
        x = np.pad(x, ((0, 0), (pad_top, pad_bottom), (pad_left, pad_right), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    windows = windows[:, :: stride, :: stride][:, :out_h, :out_w]
    # (n, oh, ow, c, kh, kw) -> (n, oh, ow, kh, kw, c)
    patches = windows.transpose(0, 1, 2, 4, 5, 3)
    return np.ascontiguousarray(patches).reshape(n * out_h * out_w, kh * kw * c)


def col2im(dpatches, x_shape, kh, kw, stride, pad_top, pad_left, out_h, out_w):
    """Scatter-add patch gradients back onto the input grid (adjoint of im2col)."""
    n, h, w, c = x_shape
    pad_bottom, pad_right = _pad_amounts(h, w, kh, kw, stride, pad_top, pad_left, out_h, out_w)
    ph, pw = h + pad_top + pad_bottom, w + pad_left + pad_right
    dxp = np.zeros((n, ph, pw, c), dtype=dpatches.dtype)
    dp = dpatches.reshape(n, out_h, out_w, kh, kw, c)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + out_h * stride : stride, j : j + out_w * stride : stride, :] += dp[:, :, :, i, j, :]
    return dxp[:, pad_top : pad_top + h, pad_left : pad_left + w, :]


def _pool_windows(x, window, stride, pad_top, pad_left, out_h, out_w, pad_value):
    n, h, w, c = x.shape
    pad_bottom, pad_right = _pad_amounts(h, w, window, window, stride, pad_top, pad_left, out_h, out_w)
    if pad_top or pad_left or pad_bottom or pad_right:
        x = np.pad(
            x,
            ((0, 0), (pad_top, pad_bottom), (pad_left, pad_right), (0, 0)),
            constant_values=pad_value,
        )
    win = np.lib.stride_tricks.sliding_window_view(x, (window, window), axis=(1, 2))
    return win[:, :: stride, :: stride][:, :out_h, :out_w]  # (n, oh, ow, c, kh, kw)


def maxpool_forward(x, window, stride, pad_top, pad_left, out_h, out_w):
    """Max pool; returns (y, argmax) with argmax flat ``row * w + col`` per cell."""
    n, h, w, c = x.shape
    win = _pool_windows(x, window, stride, pad_top, pad_left, out_h, out_w, -np.inf)
    flat = win.reshape(n, out_h, out_w, c, window * window)
    local = np.argmax(flat, axis=4)
    y = np.take_along_axis(flat, local[..., None], axis=4)[..., 0]
    # Out-of-bounds (padded) cells hold -inf and never win for finite input.
    rows = local // window + (np.arange(out_h) * stride - pad_top)[None, :, None, None]
    cols = local % window + (np.arange(out_w) * stride - pad_left)[None, None, :, None]
    idx = rows * w + cols
    return np.ascontiguousarray(y), idx.astype(np.int64)


def maxpool_backward(dy, idx, x_shape):
    n, h, w, c = x_shape
    dx = np.zeros((n, h * w, c), dtype=dy.dtype)
    ni = np.arange(n)[:, None, None, None]
    ci = np.arange(c)[None, None, None, :]
    np.add.at(dx, (ni, idx, ci), dy)
    return dx.reshape(n, h, w, c)


def _avg_counts(h, w, window, stride, pad_top, pad_left, out_h, out_w):
    r0 = np.arange(out_h) * stride - pad_top
    c0 = np.arange(out_w) * stride - pad_left
    rows = np.minimum(r0 + window, h) - np.maximum(r0, 0)
    cols = np.minimum(c0 + window, w) - np.maximum(c0, 0)
    return rows[:, None].astype(np.int64) * cols[None, :]


def avgpool_forward(x, window, stride, pad_top, pad_left, out_h, out_w):
    n, h, w, c = x.shape
    win = _pool_windows(x, window, stride, pad_top, pad_left, out_h, out_w, 0.0)
    total = win.sum(axis=(4, 5))
    counts = _avg_counts(h, w, window, stride, pad_top, pad_left, out_h, out_w)
    y = total / counts[None, :, :, None].astype(x.dtype)
    return np.ascontiguousarray(y.astype(x.dtype, copy=False))


def avgpool_backward(dy, x_shape, window, stride, pad_top, pad_left, out_h, out_w):
    n, h, w, c = x_shape
    counts = _avg_counts(h, w, window, stride, pad_top, pad_left, out_h, out_w)
    dyc = dy / counts[None, :, :, None].astype(dy.dtype)
    pad_bottom, pad_right = _pad_amounts(h, w, window, window, stride, pad_top, pad_left, out_h, out_w)
    ph, pw = h + pad_top + pad_bottom, w + pad_left + pad_right
    dxp = np.zeros((n, ph, pw, c), dtype=dy.dtype)
    for i in range(window):
        for j in range(window):
            dxp[:, i : i + out_h * stride : stride, j : j + out_w * stride : stride, :] += dyc
    return dxp[:, pad_top : pad_top + h, pad_left : pad_left + w, :]


def warp_bilinear(image, inverse, mode, cval):
    """Inverse-map ``image`` (h,w,c) through a 2x3 affine, bilinear sampling.

    ``inverse`` maps output (x, y) to source coordinates. ``mode`` is
    "edge" (clamp reads to the border) or "constant" (out-of-bounds taps
    read ``cval``).
    """
    h, w, c = image.shape
    m = np.asarray(inverse, dtype=np.float64)
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    sx = m[0, 0] * xs + m[0, 1] * ys + m[0, 2]
    sy = m[1, 0] * xs + m[1, 1] * ys + m[1, 2]

    img = image.astype(np.float64, copy=False)
    if mode == "edge":
        sx = np.clip(sx, 0.0, w - 1.0)
        sy = np.clip(sy, 0.0, h - 1.0)
        x0 = np.floor(sx).astype(np.int64)
        y0 = np.floor(sy).astype(np.int64)
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        fx = (sx - x0)[..., None]
        fy = (sy - y0)[..., None]
        v00 = img[y0, x0]
        v01 = img[y0, x1]
        v10 = img[y1, x0]
        v11 = img[y1, x1]
    else:
        x0 = np.floor(sx).astype(np.int64)
        y0 = np.floor(sy).astype(np.int64)
        x1 = x0 + 1
        y1 = y0 + 1
        fx = (sx - x0)[..., None]
        fy = (sy - y0)[..., None]

        def tap(yi, xi):
            inside = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
            v = img[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
            return np.where(inside[..., None], v, np.float64(cval))

        v00 = tap(y0, x0)
        v01 = tap(y0, x1)
        v10 = tap(y1, x0)
        v11 = tap(y1, x1)

    top = v00 + fx * (v01 - v00)
    bottom = v10 + fx * (v11 - v10)
    out = top + fy * (bottom - top)
    return out.astype(image.dtype, copy=False)
