"""Rational-ratio downsampling with a Kaiser-windowed sinc lowpass."""
from math import gcd

import numpy as np

from . import kernels
from .errors import UpsamplingRefused

KAISER_BETA = 8.0
# Filter length measured in zero crossings of the output-rate sinc.
TAPS_PER_BRANCH = 64
# Cutoff as a fraction of the output Nyquist frequency; leaves room for the transition band.
ROLLOFF = 0.92


def design_table(src_rate, dst_rate, taps_per_branch=TAPS_PER_BRANCH, beta=KAISER_BETA, rolloff=ROLLOFF):
    """Polyphase coefficient table of shape (up, 2*half).

    Row ``p`` holds the lowpass sampled at fractional offset ``p/up`` source samples.
    Each row is normalised to unit DC gain.
    """
    g = gcd(int(src_rate), int(dst_rate))
    up, down = dst_rate // g, src_rate // g
    ratio = dst_rate / src_rate
    half = int(np.ceil(taps_per_branch / (2 * ratio)))
    cutoff = 0.5 * ratio * rolloff  # cycles per source sample
    frac = np.arange(up)[:, None] / up
    # tap j sits at source index b - half + 1 + j; distance from the output instant:
    d = frac + (half - 1) - np.arange(2 * half)[None, :]
    u = d / half
    window = np.where(np.abs(u) <= 1, np.i0(beta * np.sqrt(np.clip(1 - u * u, 0, None))) / np.i0(beta), 0.0)
    table = 2 * cutoff * np.sinc(2 * cutoff * d) * window
    table /= table.sum(axis=1, keepdims=True)
    return np.ascontiguousarray(table), int(up), int(down), half


def output_length(n_in, src_rate, dst_rate):
    return (n_in * dst_rate) // src_rate


def resample(x, src_rate, dst_rate):
    """Downsample ``x`` from ``src_rate`` to ``dst_rate`` (both integer Hz)."""
    src_rate, dst_rate = int(src_rate), int(dst_rate)
    if dst_rate > src_rate:
        raise UpsamplingRefused(f"refusing to upsample {src_rate} Hz -> {dst_rate} Hz")
    x = np.asarray(x, dtype=np.float64)
    if dst_rate == src_rate:
        return x.copy()
    table, up, down, half = design_table(src_rate, dst_rate)
    n_out = output_length(len(x), src_rate, dst_rate)
    return kernels.polyphase_resample(x, table, up, down, n_out, half)
