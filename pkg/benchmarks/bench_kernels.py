#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the three hot kernels (reflective stepping, L1 cost matrices,
log-domain Sinkhorn sweeps) on workloads representative of the heavy
experiments. The matrix-scaling transport path is BLAS-bound and shared by
both backends, so it is not compared here.

Usage: python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from reflectmc._backend import get_backend
from reflectmc.dynamics import draw_momentum, make_rng
from reflectmc.geometry import Volume


def timeit(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_evolve(backend, volume, sigma, n_particles, n_steps, repeat):
    kind, a, b = volume.kernel_params()
    rng = make_rng(0)
    Q0 = volume.sample_uniform(rng, size=n_particles)
    P0 = draw_momentum(volume.dim, sigma, rng, size=n_particles)
    br = np.zeros((n_steps, n_particles), dtype=np.uint8)

    def job():
        Q, P = Q0.copy(), P0.copy()
        backend.evolve(Q, P, kind, a, b, n_steps, br)

    return timeit(job, repeat)


def bench_cost(backend, n_points, dim, repeat):
    rng = make_rng(1)
    X = rng.normal(size=(n_points, dim))
    Y = rng.normal(size=(n_points, dim))
    return (
        timeit(lambda: backend.l1_cost(X, Y), repeat),
        timeit(lambda: backend.l1_cost_self(X), repeat),
    )


def bench_sinkhorn_log(backend, n_points, eps, repeat):
    rng = make_rng(2)
    C = np.abs(rng.normal(size=(n_points, n_points))) + 0.1
    log_w = np.log(np.full(n_points, 1.0 / n_points))

    def job():
        f = np.zeros(n_points)
        g = np.zeros(n_points)
        backend.sinkhorn_log(C, log_w, log_w, eps, f, g, 200, 0.0)

    return timeit(job, repeat)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = {"python": get_backend("python")}
    try:
        backends["compiled"] = get_backend("compiled")
    except ImportError:
        print("note: compiled extension not built; timing the fallback only")

    rows = []
    cases = [
        ("evolve ball n=100, N=1000, T=400",
         lambda be: bench_evolve(be, Volume.ball(100), 8e-3, 1000, 400, args.repeat)),
        ("evolve cube n=100, N=1000, T=400",
         lambda be: bench_evolve(be, Volume.cube(100), 0.02, 1000, 400, args.repeat)),
        ("evolve interval N=5000, T=400",
         lambda be: bench_evolve(be, Volume.interval(), 0.3, 5000, 400, args.repeat)),
        ("l1_cost 500x500, n=100",
         lambda be: bench_cost(be, 500, 100, args.repeat)[0]),
        ("l1_cost_self 500, n=100",
         lambda be: bench_cost(be, 500, 100, args.repeat)[1]),
        ("sinkhorn_log 300x300, 200 sweeps",
         lambda be: bench_sinkhorn_log(be, 300, 0.05, args.repeat)),
    ]
    for label, job in cases:
        times = {name: job(be) for name, be in backends.items()}
        rows.append((label, times))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'python':>10}  {'compiled':>10}  {'speedup':>8}")
    for label, times in rows:
        py = times["python"]
        if "compiled" in times:
            cy = times["compiled"]
            print(f"{label:<{width}}  {py * 1e3:>8.1f}ms  {cy * 1e3:>8.1f}ms  {py / cy:>7.1f}x")
        else:
            print(f"{label:<{width}}  {py * 1e3:>8.1f}ms  {'-':>10}  {'-':>8}")


if __name__ == "__main__":
    main()
