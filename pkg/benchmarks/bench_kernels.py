"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``.  Each line reports the
median time per call for both backends and the speed-up.
"""

import argparse
import timeit

import numpy as np

from grbf import _kernels_py

try:
    from grbf import _ckernels
except ImportError:
    _ckernels = None


def _case(rng, n, d, k):
    means = rng.normal(size=(n, d))
    A = rng.normal(size=(n, d, d))
    covs = A @ A.transpose(0, 2, 1) / d + 0.5 * np.eye(d)
    precs = np.linalg.inv(covs)
    W = np.linalg.cholesky(precs).transpose(0, 2, 1)
    logdets = np.linalg.slogdet(covs)[1]
    X = rng.uniform(-2, 2, size=(k, d))
    return means, precs, W, logdets, X


def _time(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    runs = timeit.repeat(fn, number=number, repeat=repeat)
    return float(np.median(runs)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'n':>5}{'d':>4}{'points':>8}{'python [us]':>14}{'cython [us]':>14}{'speed-up':>10}")
    for n, d, k in [(16, 1, 4096), (64, 1, 4096), (8, 3, 4096), (8, 8, 4096), (32, 8, 4096)]:
        means, precs, W, logdets, X = _case(rng, n, d, k)
        for name, args_ in (
            ("cross_mass_stiffness", (means, precs, logdets, means, precs, logdets)),
            ("density_matrix", (X, means, W, logdets)),
        ):
            t_py = _time(lambda: getattr(_kernels_py, name)(*args_), args.repeat)
            line = f"{name:<24}{n:>5}{d:>4}{(k if name == 'density_matrix' else 0):>8}{t_py * 1e6:>14.1f}"
            if _ckernels is not None:
                t_c = _time(lambda: getattr(_ckernels, name)(*args_), args.repeat)
                line += f"{t_c * 1e6:>14.1f}{t_py / t_c:>10.1f}"
            print(line)


if __name__ == "__main__":
    main()
