"""Time the compiled kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--number 2000]
"""
import argparse
import timeit

import numpy as np

from adaptlattice import _kernels_py

try:
    from adaptlattice import _kernels
except ImportError:  # extension not built
    _kernels = None


def cases(rng):
    q, n, r = 4, 3, 8
    ens = (rng.normal(size=(q, n, r)), rng.normal(size=(q, n)), rng.normal(size=(4, r)),
           rng.normal(size=(4, n)), rng.normal(size=(q, n)), 1.0, 1e-3)
    pts = np.column_stack([np.linspace(0.1, 9.9, 50), 5 + np.sin(np.linspace(0, 3, 50))])
    lo = np.array([[4.6, 0.0], [4.6, 3.15], [4.6, 5.35]])
    hi = np.array([[5.4, 2.85], [5.4, 4.65], [5.4, 6.3]])
    poly = (pts, lo, hi, np.zeros(2), np.array([10.0, 8.0]))
    return {"ensemble_rk4 (q=4, n=3, p+m=8)": ("ensemble_rk4", ens),
            "polyline_clear (50 points, 3 boxes)": ("polyline_clear", poly)}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--number", type=int, default=2000, help="calls per timing")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'python us':>10s} {'cython us':>10s} {'speedup':>8s}")
    for label, (name, call_args) in cases(rng).items():
        times = {}
        for backend, mod in (("python", _kernels_py), ("cython", _kernels)):
            if mod is None:
                continue
            fn = getattr(mod, name)
            best = min(timeit.repeat(lambda: fn(*call_args), number=args.number,
                                     repeat=args.repeat))
            times[backend] = 1e6 * best / args.number
        cy = times.get("cython")
        cy_txt = f"{cy:10.2f}" if cy else f"{'n/a':>10s}"
        speed = f"{times['python'] / cy:7.1f}x" if cy else f"{'':>8s}"
        print(f"{label:40s} {times['python']:10.2f} {cy_txt} {speed}")


if __name__ == "__main__":
    main()
