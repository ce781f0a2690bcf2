# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: im2col, 2-D max pooling and polyphase resampling."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"

ctypedef fused real:
    float
    double


def _im2col(real[:, :, :, ::1] x, real[:, ::1] out, int kh, int kw):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t ho = h - kh + 1, wo = w - kw + 1
    cdef Py_ssize_t b, r, q, i, j, k, row, col
    with nogil:
        row = 0
        for b in range(n):
            for r in range(ho):
                for q in range(wo):
                    col = 0
                    for i in range(kh):
                        for j in range(kw):
                            for k in range(c):
                                out[row, col] = x[b, r + i, q + j, k]
                                col += 1
                    row += 1


def im2col(x, int kh, int kw):
    x = np.ascontiguousarray(x)
    n, h, w, c = x.shape
    out = np.empty(((h - kh + 1) * (w - kw + 1) * n, kh * kw * c), dtype=x.dtype)
    _im2col(x, out, kh, kw)
    return out


def _maxpool_fwd(real[:, :, :, ::1] x, real[:, :, :, ::1] out, int[:, :, :, ::1] arg,
                 int ph, int pw, int stride):
    cdef Py_ssize_t n = out.shape[0], ho = out.shape[1], wo = out.shape[2], c = out.shape[3]
    cdef Py_ssize_t b, r, q, k, i, j
    cdef int best_at
    cdef real best, v
    with nogil:
        for b in range(n):
            for r in range(ho):
                for q in range(wo):
                    for k in range(c):
                        best = x[b, r * stride, q * stride, k]
                        best_at = 0
                        for i in range(ph):
                            for j in range(pw):
                                v = x[b, r * stride + i, q * stride + j, k]
                                if v > best:
                                    best = v
                                    best_at = i * pw + j
                        out[b, r, q, k] = best
                        arg[b, r, q, k] = best_at


def maxpool_forward(x, int ph, int pw, int stride):
    x = np.ascontiguousarray(x)
    n, h, w, c = x.shape
    ho = (h - ph) // stride + 1
    wo = (w - pw) // stride + 1
    out = np.empty((n, ho, wo, c), dtype=x.dtype)
    arg = np.empty((n, ho, wo, c), dtype=np.int32)
    _maxpool_fwd(x, out, arg, ph, pw, stride)
    return out, arg


def _maxpool_bwd(real[:, :, :, ::1] dout, int[:, :, :, ::1] arg, real[:, :, :, ::1] dx,
                 int ph, int pw, int stride):
    cdef Py_ssize_t n = dout.shape[0], ho = dout.shape[1], wo = dout.shape[2], c = dout.shape[3]
    cdef Py_ssize_t b, r, q, k, i, j
    cdef int slot
    with nogil:
        # offset-major order keeps the accumulation order identical to the numpy fallback
        for i in range(ph):
            for j in range(pw):
                slot = i * pw + j
                for b in range(n):
                    for r in range(ho):
                        for q in range(wo):
                            for k in range(c):
                                if arg[b, r, q, k] == slot:
                                    dx[b, r * stride + i, q * stride + j, k] += dout[b, r, q, k]


def maxpool_backward(dout, arg, in_shape, int ph, int pw, int stride):
    dout = np.ascontiguousarray(dout)
    arg = np.ascontiguousarray(arg, dtype=np.int32)
    dx = np.zeros(tuple(in_shape), dtype=dout.dtype)
    _maxpool_bwd(dout, arg, dx, ph, pw, stride)
    return dx


def polyphase_resample(x, double[:, ::1] table, long long up, long long down,
                       Py_ssize_t out_len, Py_ssize_t half):
    cdef double[::1] src = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n_in = src.shape[0], taps = table.shape[1]
    y_arr = np.empty(out_len, dtype=np.float64)
    cdef double[::1] y = y_arr
    cdef Py_ssize_t n, j, k, first
    cdef long long pos, b, p
    cdef double acc
    with nogil:
        for n in range(out_len):
            pos = <long long>n * down
            b = pos // up
            p = pos - b * up
            first = b - half + 1
            acc = 0.0
            for j in range(taps):
                k = first + j
                if 0 <= k < n_in:
                    acc = acc + src[k] * table[p, j]
            y[n] = acc
    return y_arr
