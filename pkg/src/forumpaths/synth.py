"""Seeded synthetic forum archives for end-to-end checks."""

from __future__ import annotations

import numpy as np

from .models import SeededRng, coin_toss_batch, sticking_batch, to_symbols
from .paths import ForumArchive, TimingVector, UserPath

# 2006-01-01T00:00:00Z
DEFAULT_START = 1136073600
YEAR = 365 * 24 * 3600


def sample_power_law(
    n: int, exponent: float, xmin: float, xmax: float, rng: np.random.Generator
) -> np.ndarray:
    """Inverse-CDF draws from a density proportional to ``x**exponent`` on [xmin, xmax]."""
    if not 0 < xmin < xmax:
        raise ValueError("need 0 < xmin < xmax")
    u = rng.random(n)
    a = exponent + 1.0
    if abs(a) < 1e-12:
        return xmin * (xmax / xmin) ** u
    lo, hi = xmin**a, xmax**a
    return (lo + u * (hi - lo)) ** (1.0 / a)


def _draw(value, rng: np.random.Generator, integer: bool):
    if isinstance(value, (tuple, list)):
        lo, hi = value
        return int(rng.integers(lo, hi + 1)) if integer else float(rng.uniform(lo, hi))
    return int(value) if integer else float(value)


def synthetic_archive(
    forum_id: str = "synthetic",
    n_users: int = 200,
    length: int | tuple[int, int] = 100,
    p_post: float | tuple[float, float] = 0.75,
    p_harsh: float | None = None,
    timing_exponent: float = -1.7,
    seed: int = 0,
    gap_range: tuple[float, float] = (60.0, 3.0e7),
    start: int = DEFAULT_START,
) -> ForumArchive:
    """Archive of ``n_users`` model-generated paths with bursty timing.

    ``length`` and ``p_post`` are either fixed or ``(lo, hi)`` ranges drawn
    uniformly per user.  Paths come from the sticking model when ``p_harsh``
    is given, else from the coin toss model.  Gaps between events follow a
    power law with ``timing_exponent`` on ``gap_range`` seconds; the
    registration time is uniform over the first year after ``start``.
    """
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    seeded = SeededRng(seed)
    users = {}
    width = max(5, len(str(n_users - 1)))
    for i in range(n_users):
        user = f"u{i:0{width}d}"
        gen = seeded.generator("synth", i)
        L = _draw(length, gen, integer=True)
        pp = _draw(p_post, gen, integer=False)
        if p_harsh is None:
            row = coin_toss_batch(1, L, pp, gen)[0]
        else:
            row = sticking_batch(1, L, pp, p_harsh, gen)[0]
        t0 = start + int(gen.integers(0, YEAR))
        gaps = np.ceil(sample_power_law(L, timing_exponent, *gap_range, gen)).astype(np.int64)
        times = t0 + np.cumsum(gaps)
        users[user] = (
            UserPath(user, to_symbols(row)),
            TimingVector(t0, tuple(int(t) for t in times)),
        )
    return ForumArchive(forum_id, users)


def staircase_archive(
    n_users: int, steps: int, forum_id: str = "staircase", extra: dict | None = None
) -> ForumArchive:
    """Identical alternating ``prpr...`` paths of ``steps`` posts and replies each.

    ``extra`` maps additional user ids to symbol strings.
    """
    symbols = "pr" * steps
    users = {}
    for i in range(n_users):
        u = f"s{i:05d}"
        users[u] = (UserPath(u, symbols), TimingVector(0, tuple(range(1, len(symbols) + 1))))
    for u, sym in (extra or {}).items():
        users[u] = (UserPath(u, sym), TimingVector(0, tuple(range(1, len(sym) + 1))))
    return ForumArchive(forum_id, users)

