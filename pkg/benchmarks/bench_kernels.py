"""Compiled vs pure-Python kernels: median wall time per call.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from landingopt import _pykernels

try:
    from landingopt import _kernels
except ImportError:  # extension not built
    _kernels = None


def median_time(fn, repeat):
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return float(np.median(out))


def cases(rng):
    for n in (20, 60, 120):
        a = rng.standard_normal((n, n))
        a = a + a.T
        yield f"jacobi_eigh n={n}", lambda m, a=a: m.jacobi_eigh(a.copy())
    for d, r in ((200, 20), (1000, 50)):
        b = rng.standard_normal((d, r))
        yield f"householder_qr {d}x{r}", lambda m, b=b: m.householder_qr(b.copy())
    for d, r in ((500, 20), (2000, 100)):
        x = np.linalg.qr(rng.standard_normal((d, r)))[0] * 1.01
        g = rng.standard_normal((d, r))
        out = np.empty((d, r))
        ws = {}

        def field(m, x=x, g=g, out=out, d=d, r=r, ws=ws):
            w = ws.setdefault(m.__name__, m.LandingWorkspace(d, r))
            w.field(x, g, 1.0, out)

        yield f"landing field {d}x{r}", field


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=7)
    args = p.parse_args()
    if _kernels is None:
        print("compiled kernels are not built; only the fallback is timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'python (ms)':>12s} {'compiled (ms)':>14s} {'speedup':>8s}")
    for name, fn in cases(rng):
        fn(_pykernels)
        tp = median_time(lambda: fn(_pykernels), args.repeat)
        if _kernels is None:
            print(f"{name:28s} {tp * 1e3:12.3f}")
            continue
        fn(_kernels)
        tc = median_time(lambda: fn(_kernels), args.repeat)
        print(f"{name:28s} {tp * 1e3:12.3f} {tc * 1e3:14.3f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
