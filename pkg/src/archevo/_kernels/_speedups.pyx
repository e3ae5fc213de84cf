# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: non-dominated sorting and exact hypervolume.

Mirrors the contracts of ``_fallback``; both operate on minimization
objectives with the hypervolume reference fixed at the unit point.
"""
import numpy as np


def nd_ranks(points):
    """Front index per point (0 = non-dominated), Deb-style peeling."""
    pts_arr = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] pts = pts_arr
    cdef Py_ssize_t n = pts.shape[0], d = pts.shape[1]
    ranks_arr = np.full(n, -1, dtype=np.int32)
    if n == 0:
        return ranks_arr
    counts_arr = np.zeros(n, dtype=np.int32)
    dom_arr = np.zeros((n, n), dtype=np.uint8)
    cdef int[::1] counts = counts_arr
    cdef int[::1] ranks = ranks_arr
    cdef unsigned char[:, ::1] dom = dom_arr
    cdef Py_ssize_t i, j, k
    cdef bint le, lt

    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            le = True
            lt = False
            for k in range(d):
                if pts[i, k] > pts[j, k]:
                    le = False
                    break
                elif pts[i, k] < pts[j, k]:
                    lt = True
            if le and lt:
                dom[i, j] = 1
                counts[j] += 1

    cdef list current = []
    cdef list nxt
    for i in range(n):
        if counts[i] == 0:
            current.append(i)
    cdef int rank = 0
    cdef Py_ssize_t idx
    while current:
        nxt = []
        for idx in current:
            ranks[idx] = rank
        for idx in current:
            for j in range(n):
                if dom[idx, j]:
                    counts[j] -= 1
                    if counts[j] == 0 and ranks[j] == -1:
                        nxt.append(j)
        current = nxt
        rank += 1
    return ranks_arr


def _front_rows(pts_obj):
    """Rows not weakly dominated by an earlier/stronger row (duplicates collapse)."""
    cdef double[:, :] pts = pts_obj
    cdef Py_ssize_t m = pts.shape[0], d = pts.shape[1]
    keep_arr = np.ones(m, dtype=np.uint8)
    cdef unsigned char[::1] keep = keep_arr
    cdef Py_ssize_t i, j, k
    cdef bint le, eq
    for i in range(m):
        for j in range(m):
            if j == i:
                continue
            le = True
            eq = True
            for k in range(d):
                if pts[j, k] > pts[i, k]:
                    le = False
                    break
                if pts[j, k] != pts[i, k]:
                    eq = False
            if le and (not eq or j < i):
                keep[i] = 0
                break
    return pts_obj[np.asarray(keep_arr, dtype=bool)]


def _hv_2d(pts_obj):
    """Sweep over the 2-D front against reference (1, 1)."""
    order = np.lexsort((pts_obj[:, 1], pts_obj[:, 0]))
    cdef double[:, :] pts = pts_obj
    cdef long long[::1] idx = np.asarray(order, dtype=np.int64)
    cdef Py_ssize_t m = pts.shape[0], t
    cdef double total = 0.0, y_prev = 1.0, x, y
    for t in range(m):
        x = pts[idx[t], 0]
        y = pts[idx[t], 1]
        if y < y_prev:
            total += (1.0 - x) * (y_prev - y)
            y_prev = y
    return total


def _hv_nd(pts_obj):
    cdef Py_ssize_t n = pts_obj.shape[0], d = pts_obj.shape[1]
    if n == 0:
        return 0.0
    if d == 1:
        return 1.0 - float(pts_obj[:, 0].min())
    if d == 2:
        return _hv_2d(pts_obj)
    order = np.argsort(pts_obj[:, d - 1], kind="stable")
    sorted_pts = pts_obj[order]
    cdef double[:, :] spts = sorted_pts
    cdef double total = 0.0, z_lo, z_hi, slab_hv
    cdef Py_ssize_t i
    for i in range(n):
        z_lo = spts[i, d - 1]
        z_hi = spts[i + 1, d - 1] if i + 1 < n else 1.0
        if z_hi > z_lo:
            slab = _front_rows(sorted_pts[: i + 1, : d - 1])
            slab_hv = _hv_nd(slab)
            total += (z_hi - z_lo) * slab_hv
    return total


def hypervolume(points):
    """Exact measure of the union of boxes [p, (1, ..., 1)] (minimization)."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.size == 0:
        return 0.0
    return float(_hv_nd(pts))
