"""Time the numba and numpy backends on the hot loops.

    python3 benchmarks/bench_backends.py [--repeat 5] [--scale 1.0]

Each case runs once per backend to warm up (numba compiles on first call),
then the best of ``--repeat`` runs is reported.
"""

import argparse
import time

import numpy as np

from gmmscene import _accel
from gmmscene.gmm import DiagGmm, EmConfig, centred_moments, component_log_densities, fit_em
from gmmscene.kernels import KernelSpec, gram
from gmmscene.svm import solve_dual


def _cases(scale, rng):
    T = int(20000 * scale)
    D, M = 60, 64
    X = rng.normal(size=(T, D))
    g = DiagGmm(np.full(M, 1 / M), rng.normal(size=(M, D)), rng.uniform(0.5, 2, (M, D)), 1e-3)
    lw = component_log_densities(g, X)
    resp = np.exp(lw - lw.max(axis=1, keepdims=True))
    resp /= resp.sum(axis=1, keepdims=True)

    n_hist = int(400 * scale)
    H = rng.gamma(0.5, size=(n_hist, 256))
    H /= H.sum(axis=1, keepdims=True)

    n_svm = int(600 * scale)
    Z = rng.normal(size=(n_svm, 10))
    y = np.where(Z[:, 0] + 0.3 * rng.normal(size=n_svm) > 0, 1.0, -1.0)
    K = gram(KernelSpec("RK", 0.1), Z)

    small = rng.normal(size=(int(5000 * scale), 20))
    return [
        ("E-step log densities", lambda: component_log_densities(g, X)),
        ("M-step centred moments", lambda: centred_moments(X, resp)),
        ("EM fit (M=16, 20 iters)", lambda: fit_em(small, 16, EmConfig(max_iters=20, seed=0))),
        ("chi-square gram (CK)", lambda: gram(KernelSpec("CK"), H)),
        ("intersection gram (IK)", lambda: gram(KernelSpec("IK"), H)),
        ("SMO solve", lambda: solve_dual(K, y, 1.0)),
    ]


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="multiply problem sizes")
    args = ap.parse_args(argv)

    backends = ["numba", "numpy"] if _accel.HAVE_NUMBA else ["numpy"]
    cases = _cases(args.scale, np.random.default_rng(0))
    previous = _accel.backend()
    print(f"{'case':<28}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    try:
        for name, fn in cases:
            row = []
            for b in backends:
                _accel.set_backend(b)
                fn()
                row.append(_best(fn, args.repeat))
            line = f"{name:<28}" + "".join(f"{t * 1e3:10.2f}ms" for t in row)
            if len(row) == 2:
                line += f"{row[1] / row[0]:11.2f}x"
            print(line)
    finally:
        _accel.set_backend(previous)


if __name__ == "__main__":
    main()
