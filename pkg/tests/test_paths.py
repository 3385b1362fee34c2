from __future__ import annotations

import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forumpaths.errors import DataError, UndefinedCorrelation
from forumpaths.paths import (
    EventKind,
    ForumArchive,
    TimingVector,
    UserEvent,
    UserPath,
    build_archive,
    build_reply_graph,
    build_user_path,
    correlation_report,
    derive_user_events,
    events_from_path,
    path_pearson,
    pearson,
    post_runs,
    read_archive_jsonl,
    spearman,
    user_up_time,
    write_archive_jsonl,
)

from conftest import ev

P, R = EventKind.POST, EventKind.REPLY
symbols = st.text(alphabet="pr", max_size=60).map(lambda s: "p" + s)


def kinds(evs):
    return [(e.kind, e.time) for e in evs]


def test_derive_events_self_reply():
    events = [ev("A", "u", 1), ev("B", "v", 2, "A"), ev("C", "u", 3, "A")]
    out = derive_user_events(events, {"u", "v"})
    assert kinds(out["u"]) == [(P, 1), (R, 2), (P, 3)]
    assert kinds(out["v"]) == [(P, 2)]


def test_derive_single_post():
    assert kinds(derive_user_events([ev("A", "u", 1)], {"u"})["u"]) == [(P, 1)]


def test_reply_to_unsampled_user_not_recorded():
    out = derive_user_events([ev("A", "u", 1), ev("B", "v", 2, "A")], {"v"})
    assert list(out) == ["v"]
    assert kinds(out["v"]) == [(P, 2)]


def test_path_points_from_walk():
    path = UserPath("u", "pprp")
    assert path.points.tolist() == [[0, 0], [1, 0], [2, 0], [2, 1], [3, 1]]
    assert UserPath("u", "pr").points.tolist() == [[0, 0], [1, 0], [1, 1]]


def test_empty_path():
    path, tv = build_user_path("u", [], 5)
    assert path.symbols == ""
    assert path.points.tolist() == [[0, 0]]
    assert tv.event_times == ()


def test_path_must_start_with_post():
    with pytest.raises(ValueError):
        UserPath("u", "rp")
    with pytest.raises(ValueError):
        UserPath("u", "px")
    with pytest.raises(DataError):
        build_user_path("u", [UserEvent(R, 1, "A")], 0)


def test_points_read_only():
    with pytest.raises(ValueError):
        UserPath("u", "pp").points[0, 0] = 3


@given(symbols)
def test_path_invariants(sym):
    path = UserPath("u", sym)
    steps = np.diff(path.points, axis=0)
    assert len(path.points) == len(sym) + 1
    assert set(map(tuple, steps.tolist())) <= {(1, 0), (0, 1)}
    assert tuple(path.points[-1]) == (sym.count("p"), sym.count("r"))
    assert path.length == path.n_posts + path.n_replies


def test_timing_vector_validation():
    TimingVector(0, (0, 1, 1))
    with pytest.raises(ValueError):
        TimingVector(5, (4,))
    with pytest.raises(ValueError):
        TimingVector(0, (3, 2))


@given(symbols)
def test_decoupling_round_trip(sym):
    times = tuple(range(10, 10 + len(sym)))
    path, tv = UserPath("u", sym), TimingVector(0, times)
    pairs = events_from_path(path, tv)
    assert "".join(k.value for k, _ in pairs) == sym
    assert tuple(t for _, t in pairs) == times


@pytest.mark.parametrize("sym, runs", [("pprp", [2, 1]), ("p", [1]), ("prr", [1]), ("pprppp", [2, 3])])
def test_post_runs(sym, runs):
    assert post_runs(sym) == runs
    assert post_runs(UserPath("u", sym)) == runs


@given(symbols)
def test_post_runs_sum_to_posts(sym):
    runs = post_runs(sym)
    assert sum(runs) == sym.count("p")
    assert all(r >= 1 for r in runs)


def _pearson_oracle(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def test_staircase_pearson():
    assert path_pearson(UserPath("u", "pr" * 20)) > 0.97


def test_all_posts_pearson_undefined():
    with pytest.raises(UndefinedCorrelation):
        path_pearson(UserPath("u", "ppppp"))


@settings(max_examples=100)
@given(symbols.filter(lambda s: "r" in s))
def test_pearson_matches_direct_formula(sym):
    pts = UserPath("u", sym).points
    x, y = pts[:, 0].tolist(), pts[:, 1].tolist()
    assert abs(path_pearson(UserPath("u", sym)) - _pearson_oracle(x, y)) <= 1e-12


def test_spearman_ties():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    with pytest.raises(UndefinedCorrelation):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])


def test_reply_graph_degrees():
    g = build_reply_graph([ev("A", "u", 1), ev("B", "v", 2, "A")])
    assert g["v"].out_degree == 1 and g["u"].in_degree == 1
    assert g["u"].total == g["v"].total == 1


def test_reply_graph_self_and_multi():
    g = build_reply_graph([ev("A", "u", 1), ev("B", "u", 2, "A")])
    assert g["u"].total == 0
    g = build_reply_graph([ev("A", "u", 1), ev("B", "v", 2, "A"), ev("C", "v", 3, "A")])
    assert g["v"].out_degree == 2 and g["u"].in_degree == 2


def test_up_time():
    assert user_up_time([UserEvent(P, 10, "A"), UserEvent(P, 70, "B")]) == 60
    assert user_up_time([UserEvent(P, 10, "A")]) == 0
    evs = [UserEvent(P, 10, "a"), UserEvent(P, 20, "b"), UserEvent(P, 95, "c"), UserEvent(R, 100, "d")]
    assert user_up_time(evs) == 85
    with pytest.raises(DataError):
        user_up_time([UserEvent(R, 5, "x")])


def test_build_archive_and_correlations():
    events = [ev("A", "u", 1), ev("B", "v", 2, "A"), ev("C", "u", 3, "B"), ev("D", "w", 4, "C")]
    archive = build_archive("f", events, {"u": 0, "v": 0, "w": 0})
    assert archive.path("u").symbols == "prpr"
    assert archive.path("v").symbols == "pr"
    assert archive.timing("u").event_times == (1, 2, 3, 4)
    rep = correlation_report(archive, events, min_length=2)
    assert rep["pearson_users"] == 2
    assert rep["spearman_users"] == 3
    assert -1.0 <= rep["spearman_length_vs_degree"] <= 1.0


def test_build_archive_needs_t0():
    with pytest.raises(DataError):
        build_archive("f", [ev("A", "u", 1)], {}, users={"u"})


def test_archive_jsonl_round_trip():
    archive = ForumArchive(
        "f",
        {
            "b": (UserPath("b", "pp"), TimingVector(3, (4, 9))),
            "a": (UserPath("a", "prp"), TimingVector(0, (1, 1, 2))),
        },
    )
    buf = io.StringIO()
    write_archive_jsonl(archive, buf)
    assert buf.getvalue().splitlines()[0].startswith('{"user_id":"a"')
    back = read_archive_jsonl(io.StringIO(buf.getvalue()), "f")
    assert back.users == archive.users


def test_archive_jsonl_rejects_mismatch():
    with pytest.raises(DataError):
        read_archive_jsonl(io.StringIO('{"user_id":"a","symbols":"pp","t0":0,"event_times":[1]}\n'), "f")


def test_archive_without():
    archive = ForumArchive("f", {"a": (UserPath("a", "p"), TimingVector(0, (1,)))})
    assert len(archive.without("a")) == 0
    assert len(archive) == 1
