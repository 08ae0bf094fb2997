"""Timing comparison of the compiled and pure-numpy correlation kernels.

Run from a checkout with the package installed:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --dims 16,128,1024 --repeats 2000

The compiled extension is optional; without it only the numpy rows and
the transform path are reported.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from genkbc.kernels import _pykernels

try:
    from genkbc.kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _time(fn, args, repeats: int) -> float:
    """Best-of-three mean microseconds per call."""
    best = float("inf")
    for _ in range(3):
        start = time.perf_counter()
        for _ in range(repeats):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / repeats)
    return best * 1e6


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dims", default="16,64,256,1024")
    parser.add_argument("--repeats", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    dims = [int(d) for d in args.dims.split(",")]
    rng = np.random.default_rng(args.seed)

    ops = [
        ("correlation", "circular_correlation", 2),
        ("convolution", "circular_convolution", 2),
        ("score+grads", "score_and_grads", 3),
    ]
    print(f"{'op':<12} {'dim':>5} {'numpy us':>10} {'compiled us':>12} "
          f"{'speedup':>8} {'fft us':>8}")
    for d in dims:
        vecs = [np.ascontiguousarray(rng.normal(size=d)) for _ in range(3)]
        for label, name, arity in ops:
            py_us = _time(getattr(_pykernels, name), vecs[:arity], args.repeats)
            if _ckernels is not None:
                c_us = _time(getattr(_ckernels, name), vecs[:arity], args.repeats)
                c_col, speed = f"{c_us:12.2f}", f"{py_us / c_us:7.1f}x"
            else:
                c_col, speed = f"{'-':>12}", f"{'-':>8}"
            if label == "correlation":
                fft_us = _time(
                    _pykernels.fft_circular_correlation, vecs[:2], args.repeats
                )
                fft_col = f"{fft_us:8.2f}"
            else:
                fft_col = f"{'-':>8}"
            print(f"{label:<12} {d:>5} {py_us:10.2f} {c_col} {speed} {fft_col}")

    # agreement spot check so a benchmark run doubles as a sanity pass
    a, b = rng.normal(size=64), rng.normal(size=64)
    ref = _pykernels.circular_correlation(a, b)
    dev = float(np.abs(_pykernels.fft_circular_correlation(a, b) - ref).max())
    if _ckernels is not None:
        dev = max(dev, float(np.abs(_ckernels.circular_correlation(a, b) - ref).max()))
    print(f"\nmax cross-backend deviation at d=64: {dev:.2e}")


if __name__ == "__main__":
    main()
