"""Location tags for fingerprints captured while walking a straight path.

Two interpolation rules are provided: constant walking speed between the
path's start and stop times, and constant stride length between detected
step events.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import Location, PathSegment, TaggedObservation, points_along
from .steps import StepEvents

SPEED = "constant-speed"
STRIDE = "constant-stride"
METHODS = (SPEED, STRIDE)

CLAMP_TOLERANCE_MS = 100.0


class TaggingError(ValueError):
    pass


class StrideUnavailable(TaggingError):
    """Raised when stride tagging is requested for a walk without step events."""


@dataclass(frozen=True)
class RawEvent:
    t: float  # ms
    feature: object  # FeatureId
    value: float
    scan_id: int = -1


@dataclass(frozen=True)
class WalkRecord:
    path: PathSegment
    t_start: float
    t_end: float
    steps: StepEvents = field(default_factory=StepEvents)
    raw_events: tuple = ()

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError("walk must end after it starts")
        object.__setattr__(self, "raw_events", tuple(self.raw_events))
        # steps outside the walk (beyond tolerance) are detector noise from
        # the standing periods around it
        ts = self.steps.as_array()
        ok = (ts >= self.t_start - CLAMP_TOLERANCE_MS) & (ts <= self.t_end + CLAMP_TOLERANCE_MS)
        ts = np.clip(ts[ok], self.t_start, self.t_end)
        ts = ts[np.concatenate([[True], np.diff(ts) > 0])] if ts.size else ts
        object.__setattr__(self, "steps", StepEvents(tuple(ts)))

    @property
    def duration(self):
        return self.t_end - self.t_start


@dataclass
class TaggingReport:
    accepted: int = 0
    clamped: int = 0
    rejected: int = 0
    walks: int = 0
    stride_unavailable: int = 0


def _clamp_times(walk, t):
    t = np.asarray(t, dtype=np.float64)
    lo, hi = walk.t_start - CLAMP_TOLERANCE_MS, walk.t_end + CLAMP_TOLERANCE_MS
    ok = (t >= lo) & (t <= hi)
    clamped = ok & ((t < walk.t_start) | (t > walk.t_end))
    return np.clip(t, walk.t_start, walk.t_end), ok, clamped


def speed_fractions(walk, t):
    """Fraction of the path covered at times ``t`` under constant speed."""
    t = np.asarray(t, dtype=np.float64)
    return (t - walk.t_start) / (walk.t_end - walk.t_start)


def stride_fractions(walk, t):
    """Fraction of the path covered at times ``t`` under constant stride length.

    Before the first step the bracket is (t_start, first step); after the
    last step the walker is at the end of the path.
    """
    steps = walk.steps.as_array()
    K = steps.size
    if K == 0:
        raise StrideUnavailable("stride tagging unavailable: walk has no step events")
    t = np.asarray(t, dtype=np.float64)
    knots = np.concatenate([[walk.t_start], steps])
    j = np.searchsorted(knots, t, side="right") - 1
    j = np.clip(j, 0, K)
    inner = j < K
    frac = np.ones_like(t)
    jj = j[inner]
    lo = knots[jj]
    hi = knots[jj + 1]
    frac[inner] = (jj + (t[inner] - lo) / (hi - lo)) / K
    return np.clip(frac, 0.0, 1.0)


def _check_one(walk, t_i):
    t, ok, _ = _clamp_times(walk, [t_i])
    if not ok[0]:
        raise TaggingError(f"event at {t_i} ms lies outside the walk [{walk.t_start}, {walk.t_end}]")
    return t


def tag_constant_speed(walk, t_i):
    t = _check_one(walk, t_i)
    return Location(*points_along(walk.path, speed_fractions(walk, t))[0])


def tag_constant_stride(walk, t_i):
    t = _check_one(walk, t_i)
    return Location(*points_along(walk.path, stride_fractions(walk, t))[0])


def tag_times(walk, t, method):
    """Tag an array of timestamps; returns ((n, 2) locations, accepted mask, clamped mask)."""
    t_c, ok, clamped = _clamp_times(walk, t)
    if method == SPEED:
        frac = speed_fractions(walk, t_c)
    elif method == STRIDE:
        frac = stride_fractions(walk, t_c)
    else:
        raise ValueError(f"unknown tagging method {method!r}")
    return points_along(walk.path, frac), ok, clamped


def tag_walk(walk, method, report=None):
    """One :class:`TaggedObservation` per accepted raw event of ``walk``.

    Events more than 100 ms outside the walk are dropped and counted in
    ``report`` (if given); stragglers within that tolerance are clamped.
    """
    if report is not None:
        report.walks += 1
    if not walk.raw_events:
        return []
    if method == STRIDE and walk.steps.K == 0:
        if report is not None:
            report.stride_unavailable += 1
        raise StrideUnavailable("stride tagging unavailable: walk has no step events")
    t = np.array([e.t for e in walk.raw_events], dtype=np.float64)
    locs, ok, clamped = tag_times(walk, t, method)
    out = [
        TaggedObservation(e.feature, e.value, Location(*locs[i]), e.scan_id)
        for i, e in enumerate(walk.raw_events)
        if ok[i]
    ]
    if report is not None:
        report.accepted += len(out)
        report.rejected += int((~ok).sum())
        report.clamped += int(clamped.sum())
    return out
