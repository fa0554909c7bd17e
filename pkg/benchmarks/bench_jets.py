"""Truncated jet product: compiled kernel vs the numpy fallback.

    python benchmarks/bench_jets.py [--nodes 4096] [--order 3] [--repeat 20]

Also times one full identity-suite slice with whichever backend is active.
"""

import argparse
import time
import timeit

import numpy as np

from cmslab import jets
from cmslab.jets import mul_coeffs, tables


def bench_kernel(nodes, order, repeat):
    rng = np.random.default_rng(0)
    width = tables(order).n
    a = rng.standard_normal((width, nodes))
    b = rng.standard_normal((width, nodes))
    out = {}
    for name in ("python", "compiled"):
        try:
            jets.backend_module(name)
        except ImportError:
            print(f"{name:9s} unavailable")
            continue
        fn = lambda: mul_coeffs(a, b, order, name)  # noqa: E731
        fn()
        best = min(timeit.repeat(fn, number=1, repeat=repeat))
        out[name] = (best, fn())
        print(f"{name:9s} {best * 1e3:9.3f} ms   ({nodes} nodes, order {order}, {width} coefficients)")
    if len(out) == 2:
        (tp, rp), (tc, rc) = out["python"], out["compiled"]
        print(f"speedup   {tp / tc:9.2f}x   max |difference| {np.max(np.abs(rp - rc)):.3e}")


def bench_suite():
    from cmslab import harness
    from cmslab.grid import GridSpec

    spec = harness.load_surface("builtin:torus", {"minor": "0.3+0.05*sin(t)*cos(2*u)"})
    t0 = time.perf_counter()
    res = harness.run_suite(spec, GridSpec(32, 32, times=(0.25,)))
    dt = time.perf_counter() - t0
    print(f"suite     {dt:9.3f} s    (torus 32x32, one slice, backend {jets.BACKEND}, pass={res.passed})")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nodes", type=int, default=4096)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--no-suite", action="store_true")
    args = p.parse_args()
    bench_kernel(args.nodes, args.order, args.repeat)
    if not args.no_suite:
        bench_suite()


if __name__ == "__main__":
    main()
