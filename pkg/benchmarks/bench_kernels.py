"""Benchmark the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py
"""
from __future__ import annotations

import time

import numpy as np

from archevo._kernels import _fallback

try:
    from archevo._kernels import _speedups
except ImportError:
    _speedups = None


def _time(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    rows = []

    for n in (200, 500, 1000):
        pts = rng.random((n, 4))
        t_py = _time(_fallback.nd_ranks, pts)
        t_cy = _time(_speedups.nd_ranks, pts) if _speedups else float("nan")
        rows.append((f"nd_ranks n={n} d=4", t_py, t_cy))

    for n, d in ((30, 4), (100, 4), (200, 4), (200, 3)):
        pts = rng.random((4 * n, d))
        front = pts[_fallback.nd_ranks(pts) == 0][:n]
        t_py = _time(_fallback.hypervolume, front)
        t_cy = _time(_speedups.hypervolume, front) if _speedups else float("nan")
        rows.append((f"hypervolume m={len(front)} d={d}", t_py, t_cy))

    print(f"{'kernel':<28} {'python':>10} {'compiled':>10} {'speedup':>8}")
    for name, t_py, t_cy in rows:
        speedup = t_py / t_cy if t_cy == t_cy and t_cy > 0 else float("nan")
        print(f"{name:<28} {t_py * 1e3:>8.2f}ms {t_cy * 1e3:>8.2f}ms {speedup:>7.1f}x")
    if _speedups is None:
        print("compiled extension not available; build with `pip install -e .`")


if __name__ == "__main__":
    main()
