"""Compare the numba and numpy kernel paths on stacks of small complex matrices.

Run with ``python3 benchmarks/bench_kernels.py [--repeat R]``. Prints the best
wall time of each kernel for both paths and the maximum difference between
their outputs.
"""

import argparse
import time

import numpy as np

from ksymloop import _kernels


def _stack(rng, K, n, scale=1.0):
    return scale * (rng.normal(size=(K, n, n)) + 1j * rng.normal(size=(K, n, n)))


def _best(fn, repeat):
    fn()  # warm-up (jit compilation on the numba path)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    rng = np.random.default_rng(args.seed)

    cases = []
    for K, n in [(192, 3), (512, 4), (2048, 6)]:
        a, b = _stack(rng, K, n), _stack(rng, K, n)
        cases.append((f"matmul K={K} n={n}", lambda impl, a=a, b=b: impl.matmul(a, b)))
        x = _stack(rng, K, n, 0.7)
        cases.append((f"expm   K={K} n={n}", lambda impl, x=x: impl.expm(x)))
    for K, n, D in [(192, 3, 2), (512, 4, 3)]:
        xi = _stack(rng, D * K, n, 0.5).reshape(D, K, n, n)
        cases.append((f"rk4    K={K} n={n} deg={D - 1}", lambda impl, xi=xi: impl.rk4(xi, 0.8 + 0.3j, 64)))

    impls = [_kernels.numpy_impl] + ([_kernels.numba_impl] if _kernels.numba_impl is not None else [])
    print(f"{'kernel':<28}" + "".join(f"{impl.name:>12}" for impl in impls) + f"{'speedup':>10}{'max diff':>12}")
    for name, fn in cases:
        times, outs = [], []
        for impl in impls:
            t, out = _best(lambda: fn(impl), args.repeat)
            times.append(t)
            outs.append(out)
        diff = float(np.abs(outs[-1] - outs[0]).max()) if len(outs) > 1 else 0.0
        speed = times[0] / times[-1] if len(times) > 1 else 1.0
        print(f"{name:<28}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times) + f"{speed:>9.2f}x{diff:>12.2e}")
    if _kernels.numba_impl is None:
        print("numba is not installed; only the numpy path was timed")


if __name__ == "__main__":
    main()
