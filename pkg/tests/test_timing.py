from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forumpaths.errors import DataError
from forumpaths.paths import ForumArchive, TimingVector, UserPath
from forumpaths.synth import sample_power_law
from forumpaths.timing import fit_power_law, inter_event_times, normalize_and_pool, normalize_deltas


def _archive(times: dict[str, list[int]]) -> ForumArchive:
    return ForumArchive(
        "f", {u: (UserPath(u, "p" * len(t)), TimingVector(0, tuple(t))) for u, t in times.items()}
    )


def test_inter_event_times():
    got = inter_event_times(TimingVector(0, (10, 12, 16)))
    assert got.deltas.tolist() == [2, 4] and got.zeros_dropped == 0


def test_zero_gaps_dropped():
    got = inter_event_times(TimingVector(0, (10, 10, 16)))
    assert got.deltas.tolist() == [6] and got.zeros_dropped == 1


def test_single_event_error():
    with pytest.raises(DataError):
        inter_event_times(TimingVector(0, (10,)))


def test_registration_gap_excluded():
    assert inter_event_times(TimingVector(0, (100, 101))).deltas.tolist() == [1]


def test_normalize_single_user():
    pooled = normalize_and_pool(_archive({"u": [0, 2, 6, 12]}), min_events=2)
    assert pooled.tolist() == [0.5, 1.0, 1.5]


def test_short_users_excluded():
    archive = _archive({"short": [1, 2, 3, 4, 5], "long": list(range(0, 30, 3))})
    pooled = normalize_and_pool(archive, min_events=10)
    assert pooled.size == 9


def test_empty_pool():
    assert normalize_and_pool(_archive({"u": [1, 2]}), min_events=10).size == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(1, 10**6), min_size=1, max_size=40), min_size=1, max_size=5))
def test_each_user_has_unit_mean(gap_lists):
    for gaps in gap_lists:
        assert normalize_deltas(gaps).mean() == pytest.approx(1.0, rel=1e-12)


def test_power_law_recovery():
    x = sample_power_law(100_000, -1.7, 0.01, 100.0, np.random.default_rng(0))
    fit = fit_power_law(x)
    assert abs(fit.exponent + 1.7) <= 0.15
    assert fit.n_samples == 100_000
    assert set(fit.to_dict()) == {"exponent", "range", "bins", "residual"}


def test_power_law_scale_invariance():
    x = sample_power_law(20_000, -2.0, 0.1, 1000.0, np.random.default_rng(1))
    assert fit_power_law(x).exponent == pytest.approx(fit_power_law(x * 10).exponent, abs=1e-9)


@pytest.mark.parametrize(
    "samples",
    [np.full(100, 3.0), np.linspace(1, 5, 100), np.ones(10), np.r_[np.ones(99), -1.0]],
)
def test_power_law_rejects_degenerate(samples):
    with pytest.raises(DataError):
        fit_power_law(samples)


def test_sampler_bounds():
    x = sample_power_law(1000, -1.0, 2.0, 50.0, np.random.default_rng(2))
    assert x.min() >= 2.0 and x.max() <= 50.0
    with pytest.raises(ValueError):
        sample_power_law(10, -1.5, 5.0, 1.0, np.random.default_rng(0))
