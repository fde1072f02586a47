"""Compare the numba and numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat 5]

Times (best of ``--repeat``) the stage-wise Dykstra projection, the
structured LQ factor + solve, and a full OCP solve, and checks that both
backends agree on the results.
"""
import argparse
import time

import numpy as np

from lqturnpike import kernels
from lqturnpike.ocp import solve_ocp
from lqturnpike.scenarios import example_cone, example_rotation_box


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    p2 = example_cone()
    p1 = example_rotation_box()
    Y = rng.normal(scale=3.0, size=(5000, 4))
    g = rng.normal(size=(201, 4))
    return [
        ("project 5000 rows onto cone x interval",
         lambda: p2.S.project_many(Y, strict=False)),
        ("LQ factor + solve, N=200, n=3, m=1",
         lambda: kernels.make_lq_solver(p2.A, p2.B, p2.H, 1.0, 200).solve(g, np.ones(3))),
        ("solve_ocp example2, x0=(1,2,3), N=100",
         lambda: solve_ocp(p2, [1.0, 2.0, 3.0], 100).u),
        ("solve_ocp example1, x0=(0.6,-0.5), N=50",
         lambda: solve_ocp(p1, [0.6, -0.5], 50).u),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    results = {}
    for name in ("numpy", "numba"):
        with kernels.use_backend(name):
            rng = np.random.default_rng(42)
            for label, fn in cases(rng):
                fn()  # warm-up (numba compilation, scipy factorizations)
                results[(name, label)] = best_of(fn, args.repeat)
    labels = [label for label, _ in cases(np.random.default_rng(42))]
    print(f"{'case':<44} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>8} {'max diff':>10}")
    for label in labels:
        (t_np, out_np), (t_nb, out_nb) = results[("numpy", label)], results[("numba", label)]
        diff = float(np.max(np.abs(np.asarray(out_np) - np.asarray(out_nb))))
        print(f"{label:<44} {1e3 * t_np:12.3f} {1e3 * t_nb:12.3f} {t_np / t_nb:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
