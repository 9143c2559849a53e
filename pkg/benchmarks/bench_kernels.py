"""Compare the compiled attention kernels against the numpy fallback, and the
size-based dispatch the package actually uses.

    python benchmarks/bench_kernels.py [--repeat 2000]
"""

import argparse
import timeit

import numpy as np

from culgen import _kernels_py, kernels

try:
    from culgen import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

SHAPES = [(4, 4, 8), (16, 8, 16), (64, 12, 32), (256, 32, 32)]  # (n_queries, n_keys, d)


def bench(mod, q, k, v, dout, repeat):
    fwd = timeit.timeit(lambda: mod.attention_forward(q, k, v, 0.25), number=repeat) / repeat
    _, w = mod.attention_forward(q, k, v, 0.25)
    bwd = timeit.timeit(lambda: mod.attention_backward(dout, w, q, k, v, 0.25), number=repeat) / repeat
    return fwd, bwd


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=2000)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'shape':>14} {'backend':>8} {'forward us':>11} {'backward us':>12}")
    for n, m, d in SHAPES:
        q, k, v = rng.normal(size=(n, d)), rng.normal(size=(m, d)), rng.normal(size=(m, d))
        dout = rng.normal(size=(n, d))
        rows = [("numpy", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else []) + [("dispatch", kernels)]
        results = {}
        for name, mod in rows:
            results[name] = bench(mod, q, k, v, dout, args.repeat)
            f, b = results[name]
            print(f"{str((n, m, d)):>14} {name:>8} {f * 1e6:11.2f} {b * 1e6:12.2f}")
        if "cython" in results:
            (fp, bp), (fc, bc) = results["numpy"], results["cython"]
            print(f"{'':>14} {'speedup':>8} {fp / fc:10.2f}x {bp / bc:11.2f}x")
    if _kernels_c is None:
        print("compiled extension not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
