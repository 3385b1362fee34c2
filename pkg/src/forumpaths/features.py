"""Forum-level features: size, length, slope, baseline, offset and spread."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass
from typing import IO, Iterable, Mapping

import numpy as np

from .deadzone import archive_points
from .errors import DataError
from .paths import ForumArchive

TABLE_COLUMNS = ("forum", "size", "length", "slope", "base", "offset", "spread")


class DegenerateSlopeWarning(UserWarning):
    """No point lies off the x axis, so the best nonnegative slope is 0."""


@dataclass(frozen=True)
class ForumFeatures:
    forum: str
    size: int
    length: float
    slope: float | None
    base: float
    offset: float | None
    spread: float | None


def _cloud(points) -> np.ndarray:
    q = np.asarray(points, dtype=float)
    if q.size == 0:
        return q.reshape(0, 2)
    return q.reshape(-1, 2)


def fit_forum_slope(points) -> float:
    """Least-squares slope of a line through the origin: sum(xy) / sum(x^2)."""
    q = _cloud(points)
    sxx = float(np.dot(q[:, 0], q[:, 0]))
    if sxx == 0.0:
        raise DataError("slope undefined: every point has x = 0")
    sxy = float(np.dot(q[:, 0], q[:, 1]))
    if sxy == 0.0:
        warnings.warn("all points lie on the x axis; slope set to 0", DegenerateSlopeWarning)
        return 0.0
    return sxy / sxx


def compute_spread(points, slope: float) -> float:
    """Root mean squared vertical residual from ``y = slope * x``."""
    q = _cloud(points)
    if len(q) == 0:
        raise DataError("spread undefined for an empty point cloud")
    resid = q[:, 1] - slope * q[:, 0]
    return math.sqrt(float(np.dot(resid, resid)) / len(q))


def features_from_counts(forum: str, users: int, posts: int, replies: int) -> ForumFeatures:
    """Size, length and baseline from aggregate counts alone."""
    if users <= 0:
        raise DataError(f"{forum}: user count must be positive")
    if posts <= 0:
        raise DataError(f"{forum}: baseline undefined with zero posts")
    return ForumFeatures(
        forum, users, (posts + replies) / users, None, replies / posts, None, None
    )


def compute_forum_features(archive: ForumArchive) -> ForumFeatures:
    """All six features over every path of the archive (no length filter)."""
    if len(archive) == 0:
        raise DataError("archive is empty")
    paths = archive.paths()
    posts = sum(p.n_posts for p in paths)
    replies = sum(p.n_replies for p in paths)
    counts = features_from_counts(archive.forum_id, len(paths), posts, replies)
    q = archive_points(archive)
    slope = fit_forum_slope(q)
    return ForumFeatures(
        forum=archive.forum_id,
        size=counts.size,
        length=counts.length,
        slope=slope,
        base=counts.base,
        offset=slope - counts.base,
        spread=compute_spread(q, slope),
    )


def _user_sums(archive: ForumArchive) -> tuple[list[str], np.ndarray, np.ndarray]:
    users = sorted(archive.users)
    sxy = np.empty(len(users))
    sxx = np.empty(len(users))
    for i, u in enumerate(users):
        pts = archive.path(u).points.astype(float)
        sxy[i] = np.dot(pts[:, 0], pts[:, 1])
        sxx[i] = np.dot(pts[:, 0], pts[:, 0])
    return users, sxy, sxx


def slope_influence(archive: ForumArchive, user: str) -> float:
    """Slope with the user's path minus slope without it."""
    if len(archive) < 2:
        raise DataError("slope influence needs at least two users")
    if user not in archive.users:
        raise KeyError(user)
    with_user = fit_forum_slope(archive_points(archive))
    without = fit_forum_slope(archive_points(archive.without(user)))
    return with_user - without


def slope_influences(archive: ForumArchive) -> dict[str, float]:
    """Leave-one-out slope influence for every user, from per-user sums."""
    if len(archive) < 2:
        raise DataError("slope influence needs at least two users")
    users, sxy, sxx = _user_sums(archive)
    total_xy, total_xx = sxy.sum(), sxx.sum()
    if total_xx == 0:
        raise DataError("slope undefined: every point has x = 0")
    full = total_xy / total_xx if total_xy != 0 else 0.0
    out = {}
    for u, xy, xx in zip(users, sxy, sxx):
        rest_xx = total_xx - xx
        if rest_xx <= 0:
            raise DataError(f"removing {u!r} leaves no point with x > 0")
        rest_xy = total_xy - xy
        out[u] = full - (rest_xy / rest_xx if rest_xy != 0 else 0.0)
    return out


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return f"{value:.6f}"


def write_features_csv(rows: Iterable[ForumFeatures], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for f in rows:
        d = asdict(f)
        w.writerow([f.forum] + [_fmt(d[c]) for c in TABLE_COLUMNS[1:]])


def read_features_csv(fh: IO[str]) -> dict[str, dict[str, float]]:
    """Features table keyed by forum; blank cells are omitted."""
    reader = csv.DictReader(fh)
    if not reader.fieldnames or "forum" not in reader.fieldnames:
        raise DataError("features table needs a 'forum' column")
    table = {}
    for row in reader:
        forum = row.pop("forum")
        try:
            table[forum] = {k: float(v) for k, v in row.items() if v not in (None, "")}
        except ValueError as exc:
            raise DataError(f"features table, forum {forum!r}: {exc}") from None
    return table


def read_counts_csv(fh: IO[str]) -> list[ForumFeatures]:
    """Features from a ``forum,users,posts,replies`` counts table."""
    reader = csv.DictReader(fh)
    need = {"forum", "users", "posts", "replies"}
    if not reader.fieldnames or not need <= set(reader.fieldnames):
        raise DataError("counts table needs forum,users,posts,replies columns")
    out = []
    for row in reader:
        try:
            out.append(
                features_from_counts(
                    row["forum"], int(row["users"]), int(row["posts"]), int(row["replies"])
                )
            )
        except ValueError as exc:
            raise DataError(f"counts table line {reader.line_num}: {exc}") from None
    return out


def features_csv_text(rows: Iterable[ForumFeatures]) -> str:
    buf = io.StringIO(newline="")
    write_features_csv(rows, buf)
    return buf.getvalue()


def as_table(rows: Iterable[ForumFeatures]) -> dict[str, Mapping[str, float]]:
    return {
        f.forum: {c: getattr(f, c) for c in TABLE_COLUMNS[1:] if getattr(f, c) is not None}
        for f in rows
    }
