"""Pure-Python kernels: non-dominated sorting and exact hypervolume.

Same contracts as the compiled extension in ``_speedups``; selected by
``archevo._kernels`` when the extension is unavailable or explicitly
disabled.  All inputs are minimization objectives.
"""
from __future__ import annotations

import numpy as np


def nd_ranks(points: np.ndarray) -> np.ndarray:
    """Front index per point (0 = non-dominated), Deb-style peeling."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    n = pts.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int32)
    le = (pts[:, None, :] <= pts[None, :, :]).all(axis=-1)
    lt = (pts[:, None, :] < pts[None, :, :]).any(axis=-1)
    dom = le & lt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0).astype(np.int64)
    ranks = np.full(n, -1, dtype=np.int32)
    current = np.flatnonzero(counts == 0)
    rank = 0
    while current.size:
        ranks[current] = rank
        counts[current] = -1
        counts -= dom[current].sum(axis=0)
        current = np.flatnonzero((counts == 0) & (ranks == -1))
        rank += 1
    return ranks


def _front(points: list[tuple]) -> list[tuple]:
    """Unique non-dominated subset of a small point list."""
    uniq = sorted(set(points))
    keep = []
    for p in uniq:
        dominated = False
        for q in uniq:
            if q != p and all(a <= b for a, b in zip(q, p)):
                dominated = True
                break
        if not dominated:
            keep.append(p)
    return keep


def _hv_2d(points: list[tuple], ref: tuple) -> float:
    total = 0.0
    y_prev = ref[1]
    for x, y in sorted(set(points)):
        if y < y_prev:
            total += (ref[0] - x) * (y_prev - y)
            y_prev = y
    return total


def _hv_rec(points: list[tuple], ref: tuple) -> float:
    if not points:
        return 0.0
    d = len(ref)
    if d == 1:
        return ref[0] - min(p[0] for p in points)
    if d == 2:
        return _hv_2d(points, ref)
    order = sorted(set(points), key=lambda p: p[-1])
    total = 0.0
    for i, p in enumerate(order):
        z_lo = p[-1]
        z_hi = order[i + 1][-1] if i + 1 < len(order) else ref[-1]
        if z_hi > z_lo:
            slab = [q[:-1] for q in order[: i + 1]]
            total += (z_hi - z_lo) * _hv_rec(_front(slab), ref[:-1])
    return total


def hypervolume(points: np.ndarray) -> float:
    """Exact measure of the union of boxes [p, (1, ..., 1)] (minimization)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return 0.0
    ref = (1.0,) * pts.shape[1]
    return _hv_rec([tuple(row) for row in pts], ref)
