"""Time the compiled and numpy kernel backends on the shapes the binary model uses.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from wingbeat import _pykernels
from wingbeat.resample import design_table, output_length

try:
    from wingbeat import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng):
    x = rng.random((32, 60, 40, 1), dtype=np.float32)
    a = rng.random((32, 58, 38, 32), dtype=np.float32)
    out, arg = _pykernels.maxpool_forward(a, 2, 2, 1)
    dout = rng.random(out.shape, dtype=np.float32)
    sig = rng.standard_normal(44100 * 5)
    table, up, down, half = design_table(44100, 8000)
    n_out = output_length(len(sig), 44100, 8000)
    return {
        "im2col 32x60x40x1 k3": lambda m: m.im2col(x, 3, 3),
        "im2col 32x58x38x32 k3": lambda m: m.im2col(a, 3, 3),
        "maxpool fwd 32x58x38x32": lambda m: m.maxpool_forward(a, 2, 2, 1),
        "maxpool bwd 32x58x38x32": lambda m: m.maxpool_backward(dout, arg, a.shape, 2, 2, 1),
        "resample 5 s 44.1k->8k": lambda m: m.polyphase_resample(sig, table, up, down, n_out, half),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    mods = [_pykernels] + ([_ckernels] if _ckernels is not None else [])
    print(f"{'kernel':34s}" + "".join(f"{m.BACKEND:>12s}" for m in mods) + ("     speedup" if len(mods) == 2 else ""))
    for name, fn in cases(rng).items():
        t = [best_of(lambda m=m: fn(m), args.repeat) for m in mods]
        row = f"{name:34s}" + "".join(f"{v * 1e3:10.2f}ms" for v in t)
        if len(t) == 2:
            row += f"{t[0] / t[1]:11.1f}x"
        print(row)
    if _ckernels is None:
        print("compiled backend not built; only numpy timings shown")


if __name__ == "__main__":
    main()
