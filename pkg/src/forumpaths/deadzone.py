"""Kernel density of path points and the dead-zone mask derived from it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DataError
from .paths import ForumArchive

DEFAULT_BANDWIDTH = 2.0
DEFAULT_PERCENTILE = 5.0
# Kernel support in bandwidths; exp(-14**2 / 2) is far below double precision
# relative to the kernel peak.
_TRUNCATE = 14.0


@dataclass(frozen=True)
class DensityGrid:
    """Normalized density on the lattice square ``[0, extent]**2``.

    ``values[x, y]`` is the density at lattice point ``(x, y)``.
    """

    extent: int
    values: np.ndarray
    bandwidth: float

    def at(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        if pts.size and (pts.min() < 0 or pts.max() > self.extent):
            raise DataError("point outside the density grid")
        return self.values[pts[:, 0], pts[:, 1]]


@dataclass(frozen=True)
class DeadZoneResult:
    threshold: float
    percentile: float
    mask: np.ndarray
    outliers: np.ndarray

    def in_mask(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        m = self.mask.shape[0] - 1
        inside = (pts >= 0).all(axis=1) & (pts <= m).all(axis=1)
        out = np.zeros(len(pts), dtype=bool)
        out[inside] = self.mask[pts[inside, 0], pts[inside, 1]]
        return out


def archive_points(archive: ForumArchive) -> np.ndarray:
    """All path points of an archive, one origin per user."""
    paths = archive.paths()
    if not paths:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate([p.points for p in paths])


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.int64)
    if pts.size == 0:
        return pts.reshape(0, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array of lattice coordinates")
    if pts.min() < 0:
        raise ValueError("lattice points must have nonnegative coordinates")
    return pts


def estimate_density(
    points, bandwidth: float = DEFAULT_BANDWIDTH, extent: int | None = None
) -> DensityGrid:
    """Isotropic Gaussian kernel sum over the lattice square, normalized to 1.

    The square's side defaults to the largest coordinate among the points.
    The kernel is separable, so the sum is evaluated as a per-axis Gaussian
    filter of the point-count image.
    """
    pts = _as_points(points)
    if len(pts) == 0:
        raise DataError("cannot estimate a density from no points")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    m = int(pts.max())
    if extent is not None:
        if extent < m:
            raise ValueError(f"extent {extent} is smaller than the largest coordinate {m}")
        m = int(extent)
    counts = np.zeros((m + 1, m + 1))
    np.add.at(counts, (pts[:, 0], pts[:, 1]), 1.0)
    smoothed = ndimage.gaussian_filter(
        counts, sigma=bandwidth, mode="constant", cval=0.0, truncate=_TRUNCATE
    )
    np.clip(smoothed, 0.0, None, out=smoothed)
    return DensityGrid(m, smoothed / smoothed.sum(), float(bandwidth))


def nearest_rank(values, percentile: float) -> float:
    """Smallest value with at least ``percentile`` percent of values at or below it."""
    v = np.sort(np.asarray(values, dtype=float))
    rank = max(1, math.ceil(percentile / 100.0 * v.size - 1e-12))
    return float(v[rank - 1])


def compute_dead_zone(
    grid: DensityGrid, observed, percentile: float = DEFAULT_PERCENTILE
) -> DeadZoneResult:
    """Threshold at the nearest-rank percentile of densities at observed points.

    Observed points count with multiplicity.  The mask and the outliers use a
    strict ``<`` comparison against the threshold.
    """
    if not 0.0 < percentile < 100.0:
        raise ValueError(f"percentile must lie in (0, 100), got {percentile}")
    pts = _as_points(observed)
    if len(pts) == 0:
        raise DataError("no observed points")
    dens = grid.at(pts)
    threshold = nearest_rank(dens, percentile)
    mask = grid.values < threshold
    return DeadZoneResult(threshold, float(percentile), mask, pts[dens < threshold])


def flag_outlier_users(
    archive: ForumArchive, result: DeadZoneResult
) -> dict[str, list[tuple[int, int]]]:
    """Each user's path points that fall inside the dead zone."""
    flagged = {}
    for user in sorted(archive.users):
        pts = archive.path(user).points
        hit = result.in_mask(pts)
        flagged[user] = [(int(x), int(y)) for x, y in pts[hit]]
    return flagged
