# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: conv patch gather/scatter, pooling, bilinear warp.

Mirrors ``tumorgraph.kernels_numpy`` function-for-function; see that module
for the layout conventions. Single-threaded on purpose: results must not
depend on worker count.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

COMPILED = True

ctypedef fused floating:
    float
    double


cdef inline object _empty(tuple shape, floating value):
    if floating is float:
        return np.empty(shape, dtype=np.float32)
    else:
        return np.empty(shape, dtype=np.float64)


cdef inline object _zeros(tuple shape, floating value):
    if floating is float:
        return np.zeros(shape, dtype=np.float32)
    else:
        return np.zeros(shape, dtype=np.float64)


def im2col(floating[:, :, :, ::1] x, int kh, int kw, int stride,
           int pad_top, int pad_left, int out_h, int out_w):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    out = _empty((n * out_h * out_w, kh * kw * c), <floating>0)
    cdef floating[:, ::1] p = out
    cdef Py_ssize_t b, oh, ow, i, j, ch, row, in_r, in_c, col
    for b in range(n):
        for oh in range(out_h):
            for ow in range(out_w):
                row = (b * out_h + oh) * out_w + ow
                col = 0
                for i in range(kh):
                    in_r = oh * stride - pad_top + i
                    for j in range(kw):
                        in_c = ow * stride - pad_left + j
                        if 0 <= in_r < h and 0 <= in_c < w:
                            for ch in range(c):
                                p[row, col + ch] = x[b, in_r, in_c, ch]
                        else:
                            for ch in range(c):
                                p[row, col + ch] = 0
                        col += c
    return out


def col2im(floating[:, ::1] dpatches, tuple x_shape, int kh, int kw, int stride,
           int pad_top, int pad_left, int out_h, int out_w):
    cdef Py_ssize_t n = x_shape[0], h = x_shape[1], w = x_shape[2], c = x_shape[3]
    out = _zeros((n, h, w, c), <floating>0)
    cdef floating[:, :, :, ::1] dx = out
    cdef Py_ssize_t b, oh, ow, i, j, ch, row, in_r, in_c, col
    for b in range(n):
        for oh in range(out_h):
            for ow in range(out_w):
                row = (b * out_h + oh) * out_w + ow
                col = 0
                for i in range(kh):
                    in_r = oh * stride - pad_top + i
                    for j in range(kw):
                        in_c = ow * stride - pad_left + j
                        if 0 <= in_r < h and 0 <= in_c < w:
                            for ch in range(c):
                                dx[b, in_r, in_c, ch] += dpatches[row, col + ch]
                        col += c
    return out


def maxpool_forward(floating[:, :, :, ::1] x, int window, int stride,
                    int pad_top, int pad_left, int out_h, int out_w):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    out = _empty((n, out_h, out_w, c), <floating>0)
    idx_arr = np.empty((n, out_h, out_w, c), dtype=np.int64)
    cdef floating[:, :, :, ::1] y = out
    cdef long long[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t b, oh, ow, ch, i, j, in_r, in_c
    cdef floating best, v
    cdef long long best_i
    for b in range(n):
        for oh in range(out_h):
            for ow in range(out_w):
                for ch in range(c):
                    best_i = -1
                    best = 0
                    for i in range(window):
                        in_r = oh * stride - pad_top + i
                        if in_r < 0 or in_r >= h:
                            continue
                        for j in range(window):
                            in_c = ow * stride - pad_left + j
                            if in_c < 0 or in_c >= w:
                                continue
                            v = x[b, in_r, in_c, ch]
                            if best_i < 0 or v > best:
                                best = v
                                best_i = in_r * w + in_c
                    y[b, oh, ow, ch] = best
                    idx[b, oh, ow, ch] = best_i
    return out, idx_arr


def maxpool_backward(floating[:, :, :, ::1] dy, long long[:, :, :, ::1] idx, tuple x_shape):
    cdef Py_ssize_t n = x_shape[0], h = x_shape[1], w = x_shape[2], c = x_shape[3]
    out = _zeros((n, h, w, c), <floating>0)
    cdef floating[:, :, :, ::1] dx = out
    cdef Py_ssize_t b, oh, ow, ch, out_h = dy.shape[1], out_w = dy.shape[2]
    cdef long long f
    for b in range(n):
        for oh in range(out_h):
            for ow in range(out_w):
                for ch in range(c):
                    f = idx[b, oh, ow, ch]
                    dx[b, f // w, f % w, ch] += dy[b, oh, ow, ch]
    return out


def avgpool_forward(floating[:, :, :, ::1] x, int window, int stride,
                    int pad_top, int pad_left, int out_h, int out_w):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    out = _empty((n, out_h, out_w, c), <floating>0)
    cdef floating[:, :, :, ::1] y = out
    cdef Py_ssize_t b, oh, ow, ch, i, j, in_r, in_c, count
    cdef double acc
    for b in range(n):
        for oh in range(out_h):
            for ow in range(out_w):
                for ch in range(c):
                    acc = 0
                    count = 0
                    for i in range(window):
                        in_r = oh * stride - pad_top + i
                        if in_r < 0 or in_r >= h:
                            continue
                        for j in range(window):
                            in_c = ow * stride - pad_left + j
                            if in_c < 0 or in_c >= w:
                                continue
                            acc += x[b, in_r, in_c, ch]
                            count += 1
                    y[b, oh, ow, ch] = <floating>(acc / count)
    return out


def avgpool_backward(floating[:, :, :, ::1] dy, tuple x_shape, int window, int stride,
                     int pad_top, int pad_left, int out_h, int out_w):
    cdef Py_ssize_t n = x_shape[0], h = x_shape[1], w = x_shape[2], c = x_shape[3]
    out = _zeros((n, h, w, c), <floating>0)
    cdef floating[:, :, :, ::1] dx = out
    cdef Py_ssize_t b, oh, ow, ch, i, j, in_r, in_c, count, r0, c0
    cdef floating g
    for b in range(n):
        for oh in range(out_h):
            r0 = oh * stride - pad_top
            for ow in range(out_w):
                c0 = ow * stride - pad_left
                count = (min(r0 + window, h) - max(r0, 0)) * (min(c0 + window, w) - max(c0, 0))
                for ch in range(c):
                    g = dy[b, oh, ow, ch] / count
                    for i in range(window):
                        in_r = r0 + i
                        if in_r < 0 or in_r >= h:
                            continue
                        for j in range(window):
                            in_c = c0 + j
                            if in_c < 0 or in_c >= w:
                                continue
                            dx[b, in_r, in_c, ch] += g
    return out


def warp_bilinear(floating[:, :, ::1] image, double[:, ::1] inverse, str mode, double cval):
    cdef Py_ssize_t h = image.shape[0], w = image.shape[1], c = image.shape[2]
    out = _empty((h, w, c), <floating>0)
    cdef floating[:, :, ::1] y = out
    cdef bint edge = mode == "edge"
    cdef double m00 = inverse[0, 0], m01 = inverse[0, 1], m02 = inverse[0, 2]
    cdef double m10 = inverse[1, 0], m11 = inverse[1, 1], m12 = inverse[1, 2]
    cdef Py_ssize_t r, col, ch, x0, y0, x1, y1
    cdef double sx, sy, fx, fy, v00, v01, v10, v11, top, bottom
    for r in range(h):
        for col in range(w):
            sx = m00 * col + m01 * r + m02
            sy = m10 * col + m11 * r + m12
            if edge:
                if sx < 0:
                    sx = 0
                elif sx > w - 1:
                    sx = w - 1
                if sy < 0:
                    sy = 0
                elif sy > h - 1:
                    sy = h - 1
            x0 = <Py_ssize_t>floor_ll(sx)
            y0 = <Py_ssize_t>floor_ll(sy)
            fx = sx - x0
            fy = sy - y0
            if edge:
                x1 = x0 + 1 if x0 + 1 < w else w - 1
                y1 = y0 + 1 if y0 + 1 < h else h - 1
                for ch in range(c):
                    v00 = image[y0, x0, ch]
                    v01 = image[y0, x1, ch]
                    v10 = image[y1, x0, ch]
                    v11 = image[y1, x1, ch]
                    top = v00 + fx * (v01 - v00)
                    bottom = v10 + fx * (v11 - v10)
                    y[r, col, ch] = <floating>(top + fy * (bottom - top))
            else:
                x1 = x0 + 1
                y1 = y0 + 1
                for ch in range(c):
                    v00 = image[y0, x0, ch] if (0 <= y0 < h and 0 <= x0 < w) else cval
                    v01 = image[y0, x1, ch] if (0 <= y0 < h and 0 <= x1 < w) else cval
                    v10 = image[y1, x0, ch] if (0 <= y1 < h and 0 <= x0 < w) else cval
                    v11 = image[y1, x1, ch] if (0 <= y1 < h and 0 <= x1 < w) else cval
                    top = v00 + fx * (v01 - v00)
                    bottom = v10 + fx * (v11 - v10)
                    y[r, col, ch] = <floating>(top + fy * (bottom - top))
    return out


cdef inline long long floor_ll(double v):
    cdef long long i = <long long>v
    if v < i:
        i -= 1
    return i
