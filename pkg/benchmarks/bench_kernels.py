"""Compare the compiled and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Each kernel is run on identical inputs under both backends; the outputs are
checked for equality before timing so a fast-but-wrong backend cannot win.
"""
import argparse
import json
import sys
import timeit

import numpy as np

from dsaseg.kernels import get_backend
from dsaseg.phantom import PhantomSpec, generate


def workloads(rng):
    x = rng.standard_normal((2, 16, 66, 66))
    k, s = 3, 1
    cols = get_backend("python").im2col(x, k, s)
    pool_in = rng.standard_normal((2, 32, 64, 64))
    _, idx = get_backend("python").maxpool2d_forward(pool_in, 2)
    grad = rng.standard_normal((2, 32, 32, 32))
    vessels = generate(PhantomSpec(height=128, width=128, noise_sigma=0.0, seed=1)).label.classes > 0
    return {
        "im2col 2x16x66x66 k3": lambda m: m.im2col(x, k, s),
        "col2im 2x16x66x66 k3": lambda m: m.col2im(cols, x.shape, k, s),
        "maxpool fwd 2x32x64x64": lambda m: m.maxpool2d_forward(pool_in, 2),
        "maxpool bwd 2x32x64x64": lambda m: m.maxpool2d_backward(grad, idx, pool_in.shape, 2),
        "zhang-suen 128x128 tree": lambda m: m.zhang_suen(vessels),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args(argv)
    try:
        cy = get_backend("cython")
    except ImportError:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return 1
    py = get_backend("python")
    rows = []
    print(f"{'kernel':<26}{'python ms':>11}{'cython ms':>11}{'speedup':>9}")
    for name, fn in workloads(np.random.default_rng(0)).items():
        if not _same(fn(py), fn(cy)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 2
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3
        rows.append({"kernel": name, "python_ms": t_py, "cython_ms": t_cy,
                     "speedup": t_py / t_cy})
        print(f"{name:<26}{t_py:>11.2f}{t_cy:>11.2f}{t_py / t_cy:>8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
