"""Compare the compiled and numpy mixture kernels.

    python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 5]

Prints the best-of-``repeat`` wall time per kernel and backend, the
speedup, and the largest absolute disagreement between the two.
"""
import argparse
import timeit

import numpy as np

from hqnrate import _pykernels

try:
    from hqnrate import _ckernels
except ImportError:
    _ckernels = None


def make_inputs(n, d, k, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    means = rng.standard_normal((k, d))
    a = rng.standard_normal((k, d, d))
    cov = a @ np.transpose(a, (0, 2, 1)) + d * np.eye(d)
    prec = np.linalg.inv(np.linalg.cholesky(cov))
    log_const = rng.standard_normal(k)
    return X, means, np.ascontiguousarray(np.tril(prec)), log_const


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the numpy backend is available")
    print(f"{'kernel':<28}{'numpy s':>10}{'cython s':>10}{'speedup':>9}{'max |diff|':>12}")
    for d, k in ((1, 7), (2, 3), (3, 7)):
        X, means, prec, lc = make_inputs(args.n, d, k)
        py_lp = _pykernels.component_log_prob(X, means, prec, lc)
        t_py = best(lambda: _pykernels.component_log_prob(X, means, prec, lc), args.repeat)
        t_py2 = best(lambda: _pykernels.logsumexp_rows(py_lp), args.repeat)
        if _ckernels is not None:
            c_lp = _ckernels.component_log_prob(X, means, prec, lc)
            t_c = best(lambda: _ckernels.component_log_prob(X, means, prec, lc), args.repeat)
            t_c2 = best(lambda: _ckernels.logsumexp_rows(py_lp), args.repeat)
            diff = np.abs(c_lp - py_lp).max()
            diff2 = np.abs(_ckernels.logsumexp_rows(py_lp) - _pykernels.logsumexp_rows(py_lp)).max()
        else:
            t_c = t_c2 = diff = diff2 = float("nan")
        print(f"{f'component_log_prob d={d} k={k}':<28}{t_py:>10.4f}{t_c:>10.4f}{t_py / t_c:>9.2f}{diff:>12.2e}")
        print(f"{f'logsumexp_rows k={k}':<28}{t_py2:>10.4f}{t_c2:>10.4f}{t_py2 / t_c2:>9.2f}{diff2:>12.2e}")


if __name__ == "__main__":
    main()
