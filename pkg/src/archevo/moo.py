"""Dominance machinery, Pareto archive, normalization, and hypervolume.

All comparisons happen after the minimization transform: parameter count and
cost are taken as-is, precision and recall enter as 1 - value.  The exact
hypervolume is measured inside the unit hypercube against the reference point
(1, ..., 1); both the dominated volume (larger is better) and its remainder
1 - dominated (smaller is better) are reported.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: F401  (re-exported)
from ._kernels import hypervolume as _hv_kernel
from ._kernels import nd_ranks


class DimensionMismatchError(ValueError):
    pass


class PointOutOfBoxError(ValueError):
    pass


class EmptySetError(ValueError):
    pass


def dominates(a, b) -> bool:
    """True iff a <= b componentwise and a < b somewhere (minimization)."""
    if len(a) != len(b):
        raise DimensionMismatchError(f"vectors of length {len(a)} vs {len(b)}")
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def non_dominated_sort(points) -> list[list[int]]:
    """Ranked fronts of point indices; front 0 is the non-dominated set."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        pts = pts.reshape(len(points), -1)
    ranks = nd_ranks(pts)
    fronts: list[list[int]] = [[] for _ in range(int(ranks.max()) + 1)] if len(ranks) else []
    for i, r in enumerate(ranks):
        fronts[int(r)].append(i)
    return fronts


def crowding_distance(front_points) -> list[float]:
    """Per-point crowding distance; boundary points are infinite."""
    pts = np.asarray(front_points, dtype=np.float64)
    n = len(pts)
    if n == 0:
        return []
    if n <= 2:
        return [math.inf] * n
    d = pts.shape[1]
    dist = np.zeros(n)
    for k in range(d):
        order = np.argsort(pts[:, k], kind="stable")
        lo, hi = pts[order[0], k], pts[order[-1], k]
        dist[order[0]] = dist[order[-1]] = math.inf
        span = hi - lo
        if span <= 0:
            continue
        gaps = (pts[order[2:], k] - pts[order[:-2], k]) / span
        dist[order[1:-1]] += gaps
    return dist.tolist()


@dataclass(frozen=True)
class HvResult:
    """Dominated volume of the unit cube and its complement."""

    dominated: float
    remaining: float


def hypervolume(points, ref=None) -> HvResult:
    """Exact hypervolume for fronts in [0, 1]^d with d <= 4."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return HvResult(0.0, 1.0)
    if pts.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D point array, got shape {pts.shape}")
    d = pts.shape[1]
    if d > 4:
        raise DimensionMismatchError(f"exact hypervolume supports up to 4 objectives, got {d}")
    if ref is not None and tuple(ref) != (1.0,) * d:
        raise ValueError("only the unit reference point is supported")
    if (pts < 0.0).any() or (pts > 1.0).any():
        bad = pts[((pts < 0.0) | (pts > 1.0)).any(axis=1)][0]
        raise PointOutOfBoxError(f"point outside the unit box: {bad.tolist()}")
    dominated = float(_hv_kernel(pts))
    return HvResult(dominated, 1.0 - dominated)


# --- objective transforms -----------------------------------------------------

OBJECTIVE_NAMES = ("params", "cost", "precision", "recall")


def to_min_vector(params: float, cost: float, precision: float, recall: float) -> tuple:
    """Minimization transform: larger-is-better objectives become 1 - value."""
    return (float(params), float(cost), 1.0 - float(precision), 1.0 - float(recall))


@dataclass(frozen=True)
class Normalizer:
    """Affine map of minimization-transformed objectives into [0, 1]^d.

    ``policy`` is "whole-run" (bounds fitted over every valid individual,
    applied post hoc) or "fixed-bounds" (user bounds; out-of-range values are
    clipped so in-loop series stay inside the unit cube).
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    policy: str = "whole-run"

    def transform(self, min_vector) -> tuple[float, ...]:
        if len(min_vector) != len(self.lo):
            raise DimensionMismatchError(
                f"vector of length {len(min_vector)}, normalizer of {len(self.lo)}"
            )
        out = []
        for v, lo, hi in zip(min_vector, self.lo, self.hi):
            if hi <= lo:
                out.append(0.0)
                continue
            t = (float(v) - lo) / (hi - lo)
            if self.policy == "fixed-bounds":
                t = min(1.0, max(0.0, t))
            out.append(t)
        return tuple(out)

    def transform_many(self, min_vectors) -> np.ndarray:
        return np.array([self.transform(v) for v in min_vectors], dtype=np.float64)


def fit_normalizer(min_vectors, policy: str = "whole-run") -> Normalizer:
    """Bounds over a reference set of minimization-transformed vectors."""
    vectors = [tuple(v) for v in min_vectors]
    if not vectors:
        raise EmptySetError("cannot fit a normalizer on an empty set")
    arr = np.asarray(vectors, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError("objective vectors must be finite")
    return Normalizer(
        lo=tuple(arr.min(axis=0).tolist()),
        hi=tuple(arr.max(axis=0).tolist()),
        policy=policy,
    )


# --- Pareto archive ------------------------------------------------------------


@dataclass(frozen=True)
class ArchiveEntry:
    fingerprint: str
    min_vector: tuple[float, ...]
    payload: object = None


@dataclass
class ParetoArchive:
    """Mutually non-dominated set with dominance-based insertion."""

    members: list[ArchiveEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.members)

    def fingerprints(self) -> set[str]:
        return {m.fingerprint for m in self.members}

    def insert(self, entry: ArchiveEntry) -> bool:
        """Insert iff non-dominated; evicts members the entry dominates."""
        if any(m.fingerprint == entry.fingerprint for m in self.members):
            return False
        if any(dominates(m.min_vector, entry.min_vector) for m in self.members):
            return False
        self.members = [m for m in self.members if not dominates(entry.min_vector, m.min_vector)]
        self.members.append(entry)
        return True

    def update(self, entries) -> int:
        return sum(1 for e in entries if self.insert(e))


def merge_archives(*archives: ParetoArchive) -> ParetoArchive:
    """Co-dominant union: only individuals Pareto-optimal across all inputs."""
    merged = ParetoArchive()
    for archive in archives:
        merged.update(archive.members)
    return merged
