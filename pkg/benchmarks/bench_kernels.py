"""Compare the compiled kernels against the pure-Python fallback.

Run from the repository root after building the extension:

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time per kernel for both backends and the speedup,
and checks that both backends return the same result on every case.
"""

import argparse
import timeit

import numpy as np

from lvggm import _kernels_py as py

try:
    from lvggm import _kernels as cy
except ImportError:  # extension not built
    cy = None


def cases(rng):
    p = 160
    A = rng.standard_normal((p, p))
    Y = A @ A.T / p
    x0 = rng.standard_normal(p)
    y = rng.standard_normal(10_000)
    n = 40
    B = rng.standard_normal((n, 3 * n))
    H = B @ B.T / n + 0.1 * np.eye(n)
    g = rng.standard_normal(n)
    return {
        "top_k_indices (n=10000, k=35)": lambda m: m.top_k_indices(y, 35),
        "tpi_iterate (p=160, k=35)": lambda m: m.tpi_iterate(Y, x0, 35, 200, 1e-10, 0),
        "nn_coordinate_descent (n=40)": lambda m: m.nn_coordinate_descent(H, g, np.zeros(n), 1e-10, 5000),
    }


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-9, atol=1e-12)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=20)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(py), number=args.number, repeat=args.repeat)) / args.number
        if cy is None:
            print(f"{name:34s} {1e3 * t_py:12.3f} {'n/a':>12s} {'n/a':>8s}")
            continue
        if not same(fn(py), fn(cy)):
            raise SystemExit(f"{name}: backends disagree")
        t_cy = min(timeit.repeat(lambda: fn(cy), number=args.number, repeat=args.repeat)) / args.number
        print(f"{name:34s} {1e3 * t_py:12.3f} {1e3 * t_cy:12.3f} {t_py / t_cy:8.1f}x")


if __name__ == "__main__":
    main()
