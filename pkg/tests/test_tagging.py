import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pathsurvey.geometry import FeatureId, Location, PathSegment
from pathsurvey.steps import StepEvents
from pathsurvey.tagging import (SPEED, STRIDE, RawEvent, StrideUnavailable, TaggingError,
                                TaggingReport, WalkRecord, stride_fractions, tag_constant_speed,
                                tag_constant_stride, tag_walk)

AP = FeatureId.wifi("02:00:00:00:00:01")
LINE = PathSegment(Location(0, 0), Location(10, 0))


def walk(steps=(), events=(), path=LINE, t0=0.0, t1=10_000.0):
    raw = [RawEvent(t, AP, -60.0, i) for i, t in enumerate(events)]
    return WalkRecord(path, t0, t1, StepEvents(tuple(steps)), raw)


def test_speed_examples():
    w = walk()
    assert tag_constant_speed(w, 0.0) == LINE.start
    assert tag_constant_speed(w, 5000.0) == Location(5, 0)
    assert tag_constant_speed(w, 3000.0) == Location(3, 0)


def test_stride_fourth_step_fraction():
    # five step events and four fingerprints interleaved along the walk
    s = [1500.0, 3400.0, 5000.0, 7300.0, 10_000.0]
    fp = [900.0, 2600.0, 6100.0, 8800.0]
    w = walk(s, fp)
    third = tag_walk(w, STRIDE)[2]
    expected = (3 + (fp[2] - s[2]) / (s[3] - s[2])) / 5
    assert third.location.x == pytest.approx(10 * expected, abs=1e-12)
    assert tag_constant_stride(w, fp[2]).x == pytest.approx(10 * expected, abs=1e-12)


def test_stride_at_step_events_is_j_over_k():
    s = np.sort(np.random.default_rng(4).uniform(100, 9900, 7))
    w = walk(s)
    np.testing.assert_allclose(stride_fractions(w, s), np.arange(1, 8) / 7, rtol=0, atol=1e-15)


@given(st.integers(1, 30), st.lists(st.floats(0, 1), min_size=1, max_size=20))
def test_uniform_steps_equal_speed_tags(k, fr):
    t1 = 9_876.5
    steps = t1 * np.arange(1, k + 1) / k
    w = walk(steps, t1=t1)
    for f in fr:
        t = f * t1
        a, b = tag_constant_speed(w, t), tag_constant_stride(w, t)
        assert a.distance(b) <= 1e-9


@given(st.lists(st.floats(-50, 10_050), min_size=1, max_size=30), st.booleans())
def test_monotone_and_on_segment(ts, stride):
    path = PathSegment(Location(1, 2), Location(-3, 7))
    w = walk([1200, 2500, 4100, 6000, 8700], sorted(ts), path=path)
    obs = tag_walk(w, STRIDE if stride else SPEED)
    d = [o.location.distance(path.start) for o in obs]
    assert all(b >= a - 1e-12 for a, b in zip(d, d[1:]))
    for o in obs:
        # distance from the infinite line, and within the segment extent
        v = np.array([path.end.x - path.start.x, path.end.y - path.start.y])
        r = np.array([o.location.x - path.start.x, o.location.y - path.start.y])
        assert abs(v[0] * r[1] - v[1] * r[0]) / np.linalg.norm(v) <= 1e-9
        assert o.location.distance(path.start) <= path.length + 1e-9


def test_tag_walk_empty_and_counts():
    assert tag_walk(walk(), SPEED) == []
    obs = tag_walk(walk(events=[1000, 2000, 3000, 4000]), SPEED)
    assert len(obs) == 4
    assert [o.location.x for o in obs] == sorted(o.location.x for o in obs)


def test_boundaries_clamp_and_reject():
    rep = TaggingReport()
    w = walk([2000, 4000], [-80.0, -150.0, 5000.0, 10_050.0, 10_300.0])
    obs = tag_walk(w, STRIDE, rep)
    assert len(obs) == 3 and rep.clamped == 2 and rep.rejected == 2
    assert obs[0].location == LINE.start
    assert obs[1].location == LINE.end  # after the last step: clamp to the end
    assert obs[2].location == LINE.end
    with pytest.raises(TaggingError):
        tag_constant_speed(w, 10_500.0)


def test_before_first_step_brackets_with_start():
    w = walk([4000, 8000])
    assert tag_constant_stride(w, 2000).x == pytest.approx(2.5)


def test_stride_without_steps():
    with pytest.raises(StrideUnavailable, match="stride tagging unavailable"):
        tag_walk(walk(events=[100.0]), STRIDE)


def test_reverse_walk_is_swapped_endpoints():
    w = walk(events=[2500.0], path=LINE.reversed())
    assert tag_walk(w, SPEED)[0].location == Location(7.5, 0)


def test_steps_outside_walk_dropped():
    w = walk([-500.0, -50.0, 5000.0, 10_080.0, 12_000.0])
    assert w.steps.timestamps == (0.0, 5000.0, 10_000.0)
