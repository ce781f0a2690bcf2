"""Numpy implementations of the hot kernels.

Same signatures and outputs as the compiled ``_ckernels`` module; used when the
extension is not built or ``WINGBEAT_PURE_PYTHON`` is set.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "numpy"


def im2col(x, kh, kw):
    """Unfold an NHWC batch into (N*Ho*Wo, kh*kw*C) rows, column order (i, j, c)."""
    n, h, w, c = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))  # n, ho, wo, c, kh, kw
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, kh * kw * c)


def maxpool_forward(x, ph, pw, stride):
    n, h, w, c = x.shape
    win = sliding_window_view(x, (ph, pw), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    flat = win.reshape(n, ho, wo, c, ph * pw)
    # argmax returns the first maximum, i.e. row-major tie breaking inside the window
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg.astype(np.int32)


def maxpool_backward(dout, arg, in_shape, ph, pw, stride):
    n, h, w, c = in_shape
    _, ho, wo, _ = dout.shape
    dx = np.zeros(in_shape, dtype=dout.dtype)
    for i in range(ph):
        for j in range(pw):
            hit = arg == i * pw + j
            if not hit.any():
                continue
            dx[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += np.where(hit, dout, 0)
    return dx


def polyphase_resample(x, table, up, down, out_len, half):
    """y[n] = sum_j x[b - half + 1 + j] * table[p, j] with b, p = divmod(n * down, up)."""
    x = np.asarray(x, dtype=np.float64)
    taps = table.shape[1]
    padded = np.concatenate([np.zeros(half), x, np.zeros(half + 1)])
    y = np.empty(out_len, dtype=np.float64)
    chunk = max(1, 2 ** 20 // taps)
    offsets = np.arange(taps)
    for start in range(0, out_len, chunk):
        n = np.arange(start, min(out_len, start + chunk), dtype=np.int64)
        b, p = np.divmod(n * down, up)
        # padded index of x[b - half + 1] is b + 1
        idx = (b + 1)[:, None] + offsets
        y[start:start + len(n)] = np.einsum("ij,ij->i", padded[idx], table[p])
    return y
