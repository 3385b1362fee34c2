"""Decoupling of per-user histories into post/reply paths and timing vectors.

A user path is a lattice walk from ``(0, 0)``: each post the user makes steps
one unit right, each reply the user receives steps one unit up.  The walk is
kept as a string over ``{"p", "r"}``; the matching event times live in a
separate :class:`TimingVector`.
"""

from __future__ import annotations

import enum
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats

from .errors import DataError, UndefinedCorrelation
from .ingest import RawEvent


class EventKind(str, enum.Enum):
    POST = "p"
    REPLY = "r"


@dataclass(frozen=True)
class UserEvent:
    kind: EventKind
    time: int
    source_post_id: str


@dataclass(frozen=True)
class UserPath:
    user_id: str
    symbols: str
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if set(self.symbols) - {"p", "r"}:
            raise ValueError(f"path symbols must be 'p'/'r', got {self.symbols!r}")
        if self.symbols and self.symbols[0] != "p":
            raise ValueError(f"path of {self.user_id!r} does not start with a post")
        steps = np.zeros((len(self.symbols) + 1, 2), dtype=np.int64)
        if self.symbols:
            is_post = np.frombuffer(self.symbols.encode("ascii"), dtype=np.uint8) == ord("p")
            steps[1:, 0] = is_post
            steps[1:, 1] = ~is_post
        pts = np.cumsum(steps, axis=0)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def length(self) -> int:
        return len(self.symbols)

    @property
    def n_posts(self) -> int:
        return self.symbols.count("p")

    @property
    def n_replies(self) -> int:
        return self.symbols.count("r")


@dataclass(frozen=True)
class TimingVector:
    t0: int
    event_times: tuple[int, ...]

    def __post_init__(self):
        times = tuple(self.event_times)
        object.__setattr__(self, "event_times", times)
        if times and self.t0 > times[0]:
            raise ValueError("registration time is after the first event")
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("event times must be nondecreasing")


@dataclass(frozen=True)
class ForumArchive:
    """Immutable set of user paths and timing vectors for one forum."""

    forum_id: str
    users: Mapping[str, tuple[UserPath, TimingVector]]

    def __len__(self) -> int:
        return len(self.users)

    def __iter__(self) -> Iterator[str]:
        return iter(self.users)

    def path(self, user_id: str) -> UserPath:
        return self.users[user_id][0]

    def timing(self, user_id: str) -> TimingVector:
        return self.users[user_id][1]

    def paths(self) -> list[UserPath]:
        return [p for p, _ in self.users.values()]

    def without(self, user_id: str) -> "ForumArchive":
        return ForumArchive(
            self.forum_id, {u: v for u, v in self.users.items() if u != user_id}
        )


def derive_user_events(
    events: Sequence[RawEvent], users: Iterable[str]
) -> dict[str, list[UserEvent]]:
    """Attribute posts and received replies to users, in event order.

    A post by ``v`` whose parent was written by ``u != v`` is a reply received
    by ``u`` at the post's timestamp.  Self-replies count only as posts, and
    replies to authors outside ``users`` are not attributed.
    """
    users = set(users)
    author_of: dict[str, str] = {}
    out: dict[str, list[UserEvent]] = {u: [] for u in sorted(users)}
    for e in events:
        author_of[e.post_id] = e.author_id
        if e.author_id in users:
            out[e.author_id].append(UserEvent(EventKind.POST, e.timestamp, e.post_id))
        if e.parent_post_id is None:
            continue
        target = author_of.get(e.parent_post_id)
        if target is not None and target != e.author_id and target in users:
            out[target].append(UserEvent(EventKind.REPLY, e.timestamp, e.post_id))
    return out


def build_user_path(
    user_id: str, events: Sequence[UserEvent], t0: int
) -> tuple[UserPath, TimingVector]:
    if events and events[0].kind is not EventKind.POST:
        raise DataError(
            f"first event of {user_id!r} is a reply; reply attribution is inconsistent"
        )
    symbols = "".join(e.kind.value for e in events)
    return UserPath(user_id, symbols), TimingVector(t0, tuple(e.time for e in events))


def build_archive(
    forum_id: str,
    events: Sequence[RawEvent],
    t0: Mapping[str, int],
    users: Iterable[str] | None = None,
) -> ForumArchive:
    """Archive of every user in ``users`` (default: every user in ``t0``)."""
    users = set(t0) if users is None else set(users)
    missing = users - set(t0)
    if missing:
        raise DataError(f"no registration time for {len(missing)} user(s)")
    per_user = derive_user_events(events, users)
    built = {u: build_user_path(u, evs, t0[u]) for u, evs in per_user.items()}
    return ForumArchive(forum_id, built)


def events_from_path(path: UserPath, timing: TimingVector) -> list[tuple[EventKind, int]]:
    """Reassemble the ordered ``(kind, time)`` sequence from a decoupled history."""
    if len(path.symbols) != len(timing.event_times):
        raise ValueError("path and timing vector have different lengths")
    return [(EventKind(s), t) for s, t in zip(path.symbols, timing.event_times)]


def post_runs(path: UserPath | str) -> list[int]:
    """Lengths of maximal blocks of posts in the r-extended path ``r + P + r``."""
    symbols = path if isinstance(path, str) else path.symbols
    return [len(block) for block in ("r" + symbols + "r").split("r") if block]


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y differ in length")
    if x.size < 2:
        raise UndefinedCorrelation("need at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelation("zero variance in one coordinate")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def path_pearson(path: UserPath) -> float:
    """Pearson r between x and y over all path points, origin included."""
    return pearson(path.points[:, 0], path.points[:, 1])


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return pearson(stats.rankdata(x), stats.rankdata(y))


class Degree(NamedTuple):
    in_degree: int
    out_degree: int

    @property
    def total(self) -> int:
        return self.in_degree + self.out_degree


def build_reply_graph(events: Sequence[RawEvent]) -> dict[str, Degree]:
    """Degrees of the directed reply multigraph; every author is a vertex.

    Each reply by ``v`` to a post by ``u != v`` adds one edge ``v -> u``.
    """
    author_of = {e.post_id: e.author_id for e in events}
    indeg: dict[str, int] = defaultdict(int)
    outdeg: dict[str, int] = defaultdict(int)
    for e in events:
        indeg[e.author_id] += 0
        if e.parent_post_id is None:
            continue
        target = author_of.get(e.parent_post_id)
        if target is None or target == e.author_id:
            continue
        outdeg[e.author_id] += 1
        indeg[target] += 1
    return {u: Degree(indeg[u], outdeg[u]) for u in sorted(indeg)}


def user_up_time(events: Sequence[UserEvent]) -> int:
    """Seconds between a user's first and last posts; replies are ignored."""
    times = [e.time for e in events if e.kind is EventKind.POST]
    if not times:
        raise DataError("user has no posts; up-time undefined")
    return max(times) - min(times)


def correlation_report(
    archive: ForumArchive,
    events: Sequence[RawEvent] | None = None,
    min_length: int = 10,
) -> dict:
    """Per-forum consistency and structure correlations.

    Mean per-path Pearson r over users with path length ``>= min_length`` and,
    when the raw events are supplied, Spearman rho of path length against
    reply-graph total degree and against up-time.
    """
    rs = []
    for p in archive.paths():
        if p.length < min_length:
            continue
        try:
            rs.append(path_pearson(p))
        except UndefinedCorrelation:
            continue
    report: dict = {
        "forum": archive.forum_id,
        "pearson_min_length": min_length,
        "pearson_users": len(rs),
        "pearson_mean": float(np.mean(rs)) if rs else None,
    }
    if events is None:
        return report

    degrees = build_reply_graph(events)
    per_user = derive_user_events(events, archive.users.keys())
    users = sorted(archive.users)
    lengths = [archive.path(u).length for u in users]
    for name, values in (
        ("degree", [degrees[u].total if u in degrees else 0 for u in users]),
        ("up_time", [user_up_time(per_user[u]) if archive.path(u).n_posts else 0 for u in users]),
    ):
        try:
            rho = spearman(lengths, values)
            pval = _spearman_pvalue(rho, len(users))
        except UndefinedCorrelation:
            rho = pval = None
        report[f"spearman_length_vs_{name}"] = rho
        report[f"spearman_length_vs_{name}_p"] = pval
    report["spearman_users"] = len(users)
    return report


def _spearman_pvalue(rho: float, n: int) -> float | None:
    # two-sided t approximation
    if n < 3:
        return None
    if abs(rho) >= 1.0:
        return 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return float(2.0 * stats.t.sf(abs(t), n - 2))


def write_archive_jsonl(archive: ForumArchive, fh: IO[str]) -> None:
    """Write one loss-free record per user, ordered by user id."""
    for user in sorted(archive.users):
        path, timing = archive.users[user]
        fh.write(
            json.dumps(
                {
                    "user_id": user,
                    "symbols": path.symbols,
                    "t0": timing.t0,
                    "event_times": list(timing.event_times),
                },
                separators=(",", ":"),
                ensure_ascii=False,
            )
            + "\n"
        )


def read_archive_jsonl(fh: IO[str], forum_id: str) -> ForumArchive:
    users: dict[str, tuple[UserPath, TimingVector]] = {}
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            user = str(rec["user_id"])
            path = UserPath(user, rec["symbols"])
            timing = TimingVector(int(rec["t0"]), tuple(int(t) for t in rec["event_times"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"archive line {lineno}: {exc}") from None
        if len(path.symbols) != len(timing.event_times):
            raise DataError(f"archive line {lineno}: symbols and event_times differ in length")
        if user in users:
            raise DataError(f"archive line {lineno}: duplicate user {user!r}")
        users[user] = (path, timing)
    return ForumArchive(forum_id, users)
