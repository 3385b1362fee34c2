"""Parsing, validation, sampling and registration scoping of raw event logs."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import BinaryIO, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

FIELDS = ("forum_id", "post_id", "author_id", "timestamp", "parent_post_id")
REQUIRED = FIELDS[:4]
FORMATS = ("csv", "jsonl")

# Short keys accepted in JSONL input alongside the canonical ones.
_ALIASES = {
    "forum": "forum_id",
    "post": "post_id",
    "author": "author_id",
    "ts": "timestamp",
    "parent": "parent_post_id",
}


@dataclass(frozen=True, order=True)
class RawEvent:
    forum_id: str
    post_id: str
    author_id: str
    timestamp: int
    parent_post_id: str | None = None


@dataclass(frozen=True)
class RowError:
    line: int
    message: str


@dataclass
class ParseResult:
    events: list[RawEvent] = field(default_factory=list)
    errors: list[RowError] = field(default_factory=list)


@dataclass
class ValidationResult:
    forums: dict[str, list[RawEvent]]
    warnings: list[str] = field(default_factory=list)


class ValidationError(DataError):
    pass


def parse_timestamp(value) -> int:
    """Integer epoch seconds from an int, a digit string, or an RFC 3339 string."""
    if isinstance(value, bool):
        raise ValueError(f"unparseable timestamp {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if value.is_integer():
            return int(value)
        raise ValueError(f"non-integer timestamp {value!r}")
    if not isinstance(value, str):
        raise ValueError(f"unparseable timestamp {value!r}")
    text = value.strip()
    if not text:
        raise ValueError("empty timestamp")
    if text.lstrip("-").isdigit():
        return int(text)
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        raise ValueError(f"unparseable timestamp {value!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(math.floor(dt.timestamp()))


def _record_to_event(record: Mapping) -> RawEvent:
    missing = [k for k in REQUIRED if record.get(k) in (None, "")]
    if missing:
        raise ValueError("missing required field(s): " + ", ".join(missing))
    parent = record.get("parent_post_id")
    if parent == "":
        parent = None
    return RawEvent(
        forum_id=str(record["forum_id"]),
        post_id=str(record["post_id"]),
        author_id=str(record["author_id"]),
        timestamp=parse_timestamp(record["timestamp"]),
        parent_post_id=None if parent is None else str(parent),
    )


def parse_event_log(stream: BinaryIO | bytes, format: str) -> ParseResult:
    """Parse a CSV or JSONL event log.

    Rows that fail to parse are reported in ``ParseResult.errors`` with their
    1-based line number and are not returned as events.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    raw = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    try:
        text = bytes(raw).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"event log is not valid UTF-8: {exc}") from None
    if text.startswith("\ufeff"):
        text = text[1:]

    result = ParseResult()
    if format == "jsonl":
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("row is not a JSON object")
                obj = {_ALIASES.get(k, k): v for k, v in obj.items()}
                result.events.append(_record_to_event(obj))
            except ValueError as exc:
                result.errors.append(RowError(lineno, str(exc)))
        return result

    if not text.strip():
        return result
    reader = csv.DictReader(io.StringIO(text, newline=""))
    header = reader.fieldnames or []
    absent = [k for k in REQUIRED if k not in header]
    if absent:
        raise DataError("CSV header missing column(s): " + ", ".join(absent))
    for row in reader:
        # reader.line_num is the physical line of the row's last line
        try:
            result.events.append(_record_to_event(row))
        except ValueError as exc:
            result.errors.append(RowError(reader.line_num, str(exc)))
    return result


def serialize_events(events: Iterable[RawEvent], format: str) -> bytes:
    """Inverse of :func:`parse_event_log` for valid events."""
    if format == "jsonl":
        lines = [
            json.dumps(
                {
                    "forum_id": e.forum_id,
                    "post_id": e.post_id,
                    "author_id": e.author_id,
                    "timestamp": e.timestamp,
                    "parent_post_id": e.parent_post_id,
                },
                ensure_ascii=False,
                separators=(",", ":"),
            )
            for e in events
        ]
        return "".join(line + "\n" for line in lines).encode("utf-8")
    if format == "csv":
        buf = io.StringIO(newline="")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(FIELDS)
        for e in events:
            writer.writerow(
                [e.forum_id, e.post_id, e.author_id, e.timestamp, e.parent_post_id or ""]
            )
        return buf.getvalue().encode("utf-8")
    raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")


def _sort_key(e: RawEvent):
    return (e.timestamp, e.post_id)


def resolve_and_validate(
    events: Sequence[RawEvent], policy: str = "lenient"
) -> ValidationResult:
    """Group events by forum, resolve reply links and impose a total order.

    Events are ordered by ``(timestamp, post_id)``.  A reply whose parent is
    unknown, later than itself, or ordered after itself (equal timestamps with
    a larger parent id) is an error under ``strict`` and is turned into a
    thread starter with a warning under ``lenient``.
    """
    if policy not in ("strict", "lenient"):
        raise ValueError(f"unknown policy {policy!r}")
    by_forum: dict[str, list[RawEvent]] = defaultdict(list)
    for e in events:
        by_forum[e.forum_id].append(e)

    warnings: list[str] = []
    forums: dict[str, list[RawEvent]] = {}
    for forum_id in sorted(by_forum):
        forum_events = by_forum[forum_id]
        index: dict[str, RawEvent] = {}
        for e in forum_events:
            if e.post_id in index:
                raise ValidationError(
                    f"duplicate post_id {e.post_id!r} in forum {forum_id!r}"
                )
            index[e.post_id] = e

        resolved = []
        for e in sorted(forum_events, key=_sort_key):
            parent_id = e.parent_post_id
            problem = None
            if parent_id is not None:
                parent = index.get(parent_id)
                if parent is None:
                    problem = f"dangling parent {parent_id!r}"
                elif parent.timestamp > e.timestamp:
                    problem = f"parent {parent_id!r} is later than the reply"
                elif _sort_key(parent) > _sort_key(e):
                    problem = f"parent {parent_id!r} is ordered after the reply"
            if problem is not None:
                msg = f"{forum_id}/{e.post_id}: {problem}"
                if policy == "strict":
                    raise ValidationError(msg)
                warnings.append(msg + "; treated as thread starter")
                log.warning("%s; treated as thread starter", msg)
                e = RawEvent(e.forum_id, e.post_id, e.author_id, e.timestamp, None)
            resolved.append(e)
        forums[forum_id] = resolved
    return ValidationResult(forums, warnings)


def sample_users(user_ids: Iterable[str], fraction: float, seed: int) -> set[str]:
    """Uniform sample without replacement of ``round(fraction * n)`` users (half-up)."""
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    pool = sorted(set(user_ids))
    k = int(math.floor(fraction * len(pool) + 0.5))
    if k >= len(pool):
        return set(pool)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(pool), size=k, replace=False)
    return {pool[i] for i in chosen}


def load_registrations(stream: BinaryIO | bytes) -> dict[str, int]:
    """Read a ``user_id,registration_timestamp`` CSV."""
    raw = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    reader = csv.DictReader(io.StringIO(bytes(raw).decode("utf-8-sig"), newline=""))
    if not reader.fieldnames or not {"user_id", "registration_timestamp"} <= set(
        reader.fieldnames
    ):
        raise DataError("registration file needs user_id,registration_timestamp columns")
    table = {}
    for row in reader:
        try:
            table[row["user_id"]] = parse_timestamp(row["registration_timestamp"])
        except ValueError as exc:
            raise DataError(f"registration line {reader.line_num}: {exc}") from None
    return table


def scope_registration(
    events: Iterable[RawEvent],
    registrations: Mapping[str, int] | None = None,
    window: tuple[int, int] | None = None,
    strict: bool = False,
) -> tuple[dict[str, int], set[str]]:
    """Assign each posting user a registration time and filter by window.

    Returns ``(t0, retained)`` where ``t0`` covers every retained user.
    Without a registration entry a user's first post time stands in.
    """
    first_post: dict[str, int] = {}
    for e in events:
        t = first_post.get(e.author_id)
        if t is None or e.timestamp < t:
            first_post[e.author_id] = e.timestamp

    t0: dict[str, int] = {}
    for user, first in first_post.items():
        reg = None if registrations is None else registrations.get(user)
        if reg is not None and reg > first:
            msg = f"user {user!r} registered at {reg} after first post at {first}"
            if strict:
                raise ValidationError(msg)
            log.warning("%s; using first post time", msg)
            reg = None
        t0[user] = first if reg is None else reg

    if window is not None:
        lo, hi = window
        t0 = {u: t for u, t in t0.items() if lo <= t <= hi}
    return t0, set(t0)
