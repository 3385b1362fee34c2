"""Inter-event times, per-user mean normalization and log-binned power-law fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataError
from .paths import ForumArchive, TimingVector


class InterEventTimes(NamedTuple):
    deltas: np.ndarray
    zeros_dropped: int


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    intercept: float
    fit_range: tuple[float, float]
    bins: int
    residual: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "range": list(self.fit_range),
            "bins": self.bins,
            "residual": self.residual,
        }


def inter_event_times(tv: TimingVector) -> InterEventTimes:
    """Gaps between consecutive events; the registration gap is not included."""
    times = np.asarray(tv.event_times, dtype=float)
    if times.size < 2:
        raise DataError("need at least two events for inter-event times")
    deltas = np.diff(times)
    keep = deltas > 0
    return InterEventTimes(deltas[keep], int(np.count_nonzero(~keep)))


def normalize_deltas(deltas) -> np.ndarray:
    deltas = np.asarray(deltas, dtype=float)
    if deltas.size == 0:
        return deltas
    return deltas / deltas.mean()


def normalize_and_pool(archive: ForumArchive, min_events: int = 10) -> np.ndarray:
    """Pool each qualifying user's mean-normalized inter-event times.

    Users with fewer than ``min_events`` events are skipped.  Users are
    visited in sorted id order so the pooled array is reproducible.
    """
    pooled = []
    for user in sorted(archive.users):
        tv = archive.timing(user)
        if len(tv.event_times) < max(min_events, 2):
            continue
        deltas = inter_event_times(tv).deltas
        if deltas.size:
            pooled.append(normalize_deltas(deltas))
    if not pooled:
        return np.empty(0)
    return np.concatenate(pooled)


def fit_power_law(samples, bins_per_decade: int = 10) -> PowerLawFit:
    """Least-squares line through the log-log, log-binned empirical density.

    Bin edges sit on the grid ``10**(k / bins_per_decade)`` so that rescaling
    the data by a power of ten shifts the binning exactly.  The exponent is
    the slope of ``log10(density)`` against ``log10(bin center)`` over the
    nonempty bins.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 50:
        raise DataError(f"need at least 50 samples, got {x.size}")
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise DataError("samples must be positive and finite")
    lo, hi = float(x.min()), float(x.max())
    if hi < 10.0 * lo:
        raise DataError("samples span less than one decade")

    k_lo = math.floor(math.log10(lo) * bins_per_decade + 1e-9)
    k_hi = math.ceil(math.log10(hi) * bins_per_decade - 1e-9)
    if k_hi <= k_lo:
        k_hi = k_lo + 1
    edges = 10.0 ** (np.arange(k_lo, k_hi + 1) / bins_per_decade)
    # guard the outer edges against rounding in 10**k
    edges[0] = min(edges[0], lo)
    edges[-1] = max(edges[-1], hi)
    counts, _ = np.histogram(x, bins=edges)
    widths = np.diff(edges)
    centers = np.sqrt(edges[:-1] * edges[1:])
    nonempty = counts > 0
    if np.count_nonzero(nonempty) < 3:
        raise DataError("fewer than three nonempty bins")

    lx = np.log10(centers[nonempty])
    ly = np.log10(counts[nonempty] / (x.size * widths[nonempty]))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    used = np.flatnonzero(nonempty)
    return PowerLawFit(
        exponent=float(slope),
        intercept=float(intercept),
        fit_range=(float(edges[used[0]]), float(edges[used[-1] + 1])),
        bins=int(used.size),
        residual=float(np.sqrt(np.mean(resid**2))),
        n_samples=int(x.size),
    )
