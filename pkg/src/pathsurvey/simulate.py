"""Synthetic survey environments with ground truth.

The radio model is log-distance path loss with i.i.d. Gaussian shadowing;
magnetic fields are smooth harmonic surfaces plus localized anomaly bumps.
Walks integrate a (optionally sinusoidally modulated) speed profile, with
cadence following speed at a fixed stride length, so the accelerometer
stream carries one impact peak per completed step.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .fingerprint import PATH_BASED, POINT_BASED, extract_magnetic_features
from .geometry import (RSS_MAX_DBM, RSS_MIN_DBM, FeatureId, Location, PathSegment, build_grid,
                       points_in_polygon)
from .localize import QueryObservation
from .steps import StepEvents
from .tagging import RawEvent, WalkRecord

GRAVITY = 9.81
D0_M = 1.0
DEFAULT_T0_MS = 1_700_000_000_000.0
SPEEDS_MPS = {"slow": 0.6, "normal": 1.0, "fast": 1.6}


@dataclass(frozen=True)
class AccessPoint:
    bssid: str
    location: Location
    p0_dbm: float = -40.0
    pathloss_exponent: float = 3.0
    shadow_sigma: float = 4.0

    def __post_init__(self):
        if not 1.5 <= self.pathloss_exponent <= 5.0:
            raise ValueError("path-loss exponent must lie in [1.5, 5]")
        if self.shadow_sigma < 0:
            raise ValueError("shadow_sigma must be non-negative")

    @property
    def feature(self):
        return FeatureId.wifi(self.bssid)

    def mean_rss(self, xy):
        """Deterministic path-loss RSS (dBm) at (n, 2) points."""
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        d = np.hypot(xy[:, 0] - self.location.x, xy[:, 1] - self.location.y)
        return self.p0_dbm - 10.0 * self.pathloss_exponent * np.log10(np.maximum(d, D0_M) / D0_M)

    def to_dict(self):
        return {"bssid": self.bssid, "x": self.location.x, "y": self.location.y,
                "p0_dbm": self.p0_dbm, "pathloss_exponent": self.pathloss_exponent,
                "shadow_sigma": self.shadow_sigma}

    @classmethod
    def from_dict(cls, d):
        return cls(d["bssid"], Location(d["x"], d["y"]), d["p0_dbm"], d["pathloss_exponent"],
                   d["shadow_sigma"])


@dataclass(frozen=True)
class ScalarField:
    """``base + sum(a*sin(kx*x + ky*y + phase)) + sum(gaussian bumps)``."""

    base: float
    harmonics: tuple = ()  # (amplitude, kx, ky, phase)
    bumps: tuple = ()  # (x, y, amplitude, width)

    def __call__(self, xy):
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        out = np.full(len(xy), float(self.base))
        for a, kx, ky, ph in self.harmonics:
            out += a * np.sin(kx * xy[:, 0] + ky * xy[:, 1] + ph)
        for bx, by, a, w in self.bumps:
            r2 = (xy[:, 0] - bx) ** 2 + (xy[:, 1] - by) ** 2
            out += a * np.exp(-0.5 * r2 / (w * w))
        return out

    def to_dict(self):
        return {"base": self.base, "harmonics": [list(h) for h in self.harmonics],
                "bumps": [list(b) for b in self.bumps]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["base"], tuple(tuple(h) for h in d["harmonics"]),
                   tuple(tuple(b) for b in d["bumps"]))


@dataclass(frozen=True)
class EnvironmentSpec:
    aps: tuple
    magnitude_field: ScalarField
    z_field: ScalarField
    walkable: tuple  # polygon vertices
    rng_seed: int = 0

    @property
    def bounds(self):
        p = np.asarray(self.walkable, dtype=np.float64)
        return (float(p[:, 0].min()), float(p[:, 1].min()),
                float(p[:, 0].max()), float(p[:, 1].max()))

    def grid(self, resolution=0.1):
        return build_grid(self.bounds, resolution, self.walkable)

    def is_walkable(self, xy):
        return points_in_polygon(xy, self.walkable)

    def ap(self, bssid):
        for a in self.aps:
            if a.bssid == bssid.lower():
                return a
        raise KeyError(bssid)

    def to_dict(self):
        return {"aps": [a.to_dict() for a in self.aps],
                "magnitude_field": self.magnitude_field.to_dict(),
                "z_field": self.z_field.to_dict(),
                "walkable": [list(v) for v in self.walkable], "rng_seed": self.rng_seed}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(AccessPoint.from_dict(a) for a in d["aps"]),
                   ScalarField.from_dict(d["magnitude_field"]), ScalarField.from_dict(d["z_field"]),
                   tuple(tuple(v) for v in d["walkable"]), int(d.get("rng_seed", 0)))


def _bssid(rng, used):
    while True:
        octets = [0x02] + list(rng.integers(0, 256, size=5))
        mac = ":".join(f"{int(o):02x}" for o in octets)
        if mac not in used:
            used.add(mac)
            return mac


def corridor_environment(length=50.0, width=3.0, n_aps=12, seed=0, shadow_sigma=4.0,
                         p0_range=(-42.0, -35.0), exponent_range=(2.6, 3.4)):
    """A straight corridor with APs in the rooms on either side."""
    rng = np.random.default_rng(seed)
    used = set()
    aps = []
    for i in range(n_aps):
        x = (i + 0.5) * length / n_aps + rng.uniform(-1.0, 1.0)
        side = -1 if i % 2 == 0 else 1
        y = -rng.uniform(1.0, 3.0) if side < 0 else width + rng.uniform(1.0, 3.0)
        aps.append(AccessPoint(_bssid(rng, used), Location(x, y), float(rng.uniform(*p0_range)),
                               float(rng.uniform(*exponent_range)), shadow_sigma))

    def field_(base, amp, n_bumps, bump_amp):
        harm = tuple((float(rng.uniform(0.5, 1.0) * amp), float(2 * math.pi / rng.uniform(4.0, 15.0)),
                      float(2 * math.pi / rng.uniform(6.0, 20.0)), float(rng.uniform(0, 2 * math.pi)))
                     for _ in range(3))
        bumps = tuple((float(rng.uniform(0, length)), float(rng.uniform(0, width)),
                       float(rng.uniform(-bump_amp, bump_amp)), float(rng.uniform(0.8, 2.0)))
                      for _ in range(n_bumps))
        return ScalarField(base, harm, bumps)

    n_bumps = max(1, int(length / 6))
    magnitude = field_(48.0, 2.0, n_bumps, 6.0)
    z = field_(20.0, 1.3, n_bumps, 4.0)
    walkable = ((0.0, 0.0), (length, 0.0), (length, width), (0.0, width))
    return EnvironmentSpec(tuple(aps), magnitude, z, walkable, seed)


def corridor_paths(env, n_lanes=2, margin=0.25, both_directions=True):
    """Straight lengthwise survey paths, evenly spaced across the corridor."""
    x0, y0, x1, y1 = env.bounds
    paths = []
    for i in range(n_lanes):
        y = y0 + (y1 - y0) * (i + 1) / (n_lanes + 1)
        p = PathSegment(Location(x0 + margin, y), Location(x1 - margin, y))
        paths.append(p)
        if both_directions:
            paths.append(p.reversed())
    return paths


def marker_lattice(env, spacing=1.2):
    """Point-survey markers on a centred square lattice inside the walkable area."""
    x0, y0, x1, y1 = env.bounds
    nx = max(1, int(math.floor((x1 - x0) / spacing + 1e-9)))
    ny = max(1, int(math.floor((y1 - y0) / spacing + 1e-9)))
    xs = x0 + ((x1 - x0) - (nx - 1) * spacing) / 2 + spacing * np.arange(nx)
    ys = y0 + ((y1 - y0) - (ny - 1) * spacing) / 2 + spacing * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    pts = pts[env.is_walkable(pts)]
    return [Location(*p) for p in pts]


def random_test_points(env, n, rng):
    x0, y0, x1, y1 = env.bounds
    out = []
    while len(out) < n:
        p = rng.uniform([x0, y0], [x1, y1])
        if env.is_walkable(p)[0]:
            out.append(Location(*p))
    return out


def sample_rss(env, ap, location, rng):
    """One RSS reading (dBm): path loss plus shadowing, clamped to [-100, 0]."""
    mean = ap.mean_rss([[location.x, location.y]])[0]
    return float(np.clip(mean + rng.normal(0.0, ap.shadow_sigma), RSS_MIN_DBM, RSS_MAX_DBM))


def _rss_many(ap, xy, rng):
    mean = ap.mean_rss(xy)
    return np.clip(mean + rng.normal(0.0, ap.shadow_sigma, size=mean.shape), RSS_MIN_DBM, RSS_MAX_DBM)


def magnetometer(env, xy, heading_rad, rng, noise_ut):
    """Device-frame (mx, my, mz) for a phone held flat with the given heading."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    M = env.magnitude_field(xy)
    Z = env.z_field(xy)
    h = np.sqrt(np.maximum(M * M - Z * Z, 0.0))
    heading = np.broadcast_to(heading_rad, M.shape)
    out = np.column_stack([h * np.cos(heading), -h * np.sin(heading), Z])
    return out + rng.normal(0.0, noise_ut, size=out.shape)


@dataclass(frozen=True)
class SurveyPlan:
    """How a survey is run.  Speeds in m/s, intervals in ms, rates in Hz."""

    mode: str = PATH_BASED
    points: tuple = ()
    paths: tuple = ()
    scans_per_point: int = 30
    speed_mps: float = 1.0
    speed_modulation: float = 0.0
    modulation_period_s: float = None
    step_frequency_hz: float = 2.0
    scan_interval_ms: tuple = (360.0, 420.0)
    accel_rate_hz: float = 50.0
    accel_noise: float = 0.3
    gait_amplitude: float = 2.5
    mag_rate_hz: float = 2.0
    mag_noise_ut: float = 0.3
    max_aps_per_scan: int = 8
    detection_floor_dbm: float = -90.0
    pad_s: float = 1.0

    def __post_init__(self):
        if self.mode not in (PATH_BASED, POINT_BASED):
            raise ValueError(f"unknown survey mode {self.mode!r}")
        if not self.speed_mps > 0:
            raise ValueError("speed must be positive")
        if not 0 <= self.speed_modulation < 1:
            raise ValueError("speed modulation must lie in [0, 1)")
        lo, hi = self.scan_interval_ms
        if not 0 < lo <= hi:
            raise ValueError("bad scan interval range")


@dataclass
class SimulatedWalk:
    record: WalkRecord  # raw events, no steps yet
    accel_t: np.ndarray
    accel: np.ndarray
    mag_t: np.ndarray
    mag: np.ndarray
    wifi: list  # (t_ms, scan_id, bssid, rss_dbm)
    truth: np.ndarray  # (n_events, 2), aligned with record.raw_events
    true_steps: np.ndarray
    stride_m: float

    def with_steps(self, steps):
        r = self.record
        if not isinstance(steps, StepEvents):
            steps = StepEvents(tuple(steps))
        return WalkRecord(r.path, r.t_start, r.t_end, steps, r.raw_events)


@dataclass
class SimulatedPoint:
    location: Location
    t_start: float
    t_end: float
    wifi: list
    mag_t: np.ndarray
    mag: np.ndarray

    def scans(self):
        """Per-scan fingerprint vectors ``(location, [(feature, rss)], scan_id)``."""
        groups = {}
        for _, sid, bssid, rss in self.wifi:
            groups.setdefault(sid, []).append((FeatureId.wifi(bssid), rss))
        return [(self.location, readings, sid) for sid, readings in groups.items()]

    def magnetic_readings(self):
        feats = extract_magnetic_features(self.mag)
        return [(f, float(v)) for i in range(len(self.mag_t)) for f, vals in feats.items()
                for v in [vals[i]]]


def walk_rng(seed, index):
    return np.random.default_rng([int(seed), int(index)])


class _Kinematics:
    """Walker position along a path under a sinusoidally modulated speed."""

    def __init__(self, length, speed, modulation, period, phase):
        self.L = length
        self.v = speed
        self.m = modulation
        self.T = period
        self.ph = phase
        hi = length / (speed * (1.0 - modulation)) * 1.01 + 1e-6
        self.duration = brentq(lambda t: self.distance(t) - length, 0.0, hi, xtol=1e-12)

    def distance(self, tau):
        tau = np.asarray(tau, dtype=np.float64)
        w = 2.0 * math.pi / self.T
        return self.v * tau + self.m * self.v / w * (math.cos(self.ph) - np.cos(w * tau + self.ph))

    def speed(self, tau):
        w = 2.0 * math.pi / self.T
        return self.v * (1.0 + self.m * np.sin(w * np.asarray(tau) + self.ph))

    def time_at(self, dist):
        return brentq(lambda t: self.distance(t) - dist, 0.0, self.duration, xtol=1e-12)


def _gait_window(phi, K):
    w = np.ones_like(phi)
    head = phi < 0.5
    w[head] = np.sin(math.pi * phi[head]) ** 2
    tail = phi > K
    w[tail] = np.cos(math.pi * np.minimum(phi[tail] - K, 0.5)) ** 2
    w[phi <= 0] = 0.0
    return w


def _scan_readings(env, plan, rng, at_time, t0_s, t1_s, scan_id, position):
    """Readings of one scan starting at ``t0_s`` (s, walk clock) ending at ``t1_s``."""
    mid = position(0.5 * (t0_s + t1_s))
    means = np.array([ap.mean_rss(mid)[0] for ap in env.aps])
    order = [i for i in np.argsort(-means, kind="stable") if means[i] >= plan.detection_floor_dbm]
    order = order[:plan.max_aps_per_scan]
    n = len(order)
    out = []
    for k, i in enumerate(order):
        tr = t0_s + (t1_s - t0_s) * (k + 1) / (n + 1)
        if not at_time(tr):
            continue
        ap = env.aps[i]
        rss = float(_rss_many(ap, position(tr), rng)[0])
        out.append((tr, scan_id, ap.bssid, rss))
    return out


def simulate_walk(env, path, plan, rng, t0_ms=DEFAULT_T0_MS, scan_id_base=0):
    """Simulate one walk along ``path``; returns a :class:`SimulatedWalk`."""
    ends = np.array([[path.start.x, path.start.y], [path.end.x, path.end.y]])
    probe = ends[0] + np.linspace(0, 1, 64)[:, None] * (ends[1] - ends[0])
    if not env.is_walkable(probe).all():
        raise ValueError("path leaves the walkable area")
    L = path.length
    K = max(1, int(round(L * plan.step_frequency_hz / plan.speed_mps)))
    stride = L / K
    period = plan.modulation_period_s or L / plan.speed_mps
    phase = float(rng.uniform(0, 2 * math.pi)) if plan.speed_modulation > 0 else 0.0
    kin = _Kinematics(L, plan.speed_mps, plan.speed_modulation, period, phase)
    D = kin.duration
    direction = (ends[1] - ends[0]) / L
    heading = math.atan2(direction[1], direction[0])

    def position(tau):
        d = np.clip(kin.distance(tau), 0.0, L)
        return ends[0] + np.atleast_1d(d)[:, None] * direction

    # accelerometer, including standing periods either side of the walk
    dt = 1.0 / plan.accel_rate_hz
    n_acc = int(math.floor((D + 2 * plan.pad_s) / dt)) + 1
    tau = -plan.pad_s + dt * np.arange(n_acc)
    phi = np.zeros(n_acc)
    walking = (tau >= 0) & (tau <= D)
    phi[walking] = kin.distance(tau[walking]) / stride
    after = tau > D
    f_end = float(kin.speed(D)) / stride
    phi[after] = K + f_end * (tau[after] - D)
    gait = plan.gait_amplitude * _gait_window(phi, K) * np.cos(2 * math.pi * phi)
    accel = rng.normal(0.0, plan.accel_noise, size=(n_acc, 3))
    accel[:, 2] += GRAVITY + gait
    true_steps = np.array([kin.time_at(k * stride) for k in range(1, K)] + [D])

    # magnetometer, during the walk
    n_mag = int(math.floor(D * plan.mag_rate_hz)) + 1
    mag_tau = np.arange(n_mag) / plan.mag_rate_hz
    mag = magnetometer(env, position(mag_tau), heading, rng, plan.mag_noise_ut)

    # WiFi scans back to back from a random start
    wifi = []
    t_scan = float(rng.uniform(0.0, 0.2))
    sid = scan_id_base
    while t_scan < D:
        dur = float(rng.uniform(*plan.scan_interval_ms)) / 1000.0
        wifi += _scan_readings(env, plan, rng, lambda tr: tr <= D, t_scan, t_scan + dur, sid,
                               position)
        sid += 1
        t_scan += dur

    to_ms = lambda s: t0_ms + 1000.0 * np.asarray(s, dtype=np.float64)  # noqa: E731
    t_start, t_end = float(to_ms(0.0)), float(to_ms(D))
    events = [(float(to_ms(tr)), 0, RawEvent(float(to_ms(tr)), FeatureId.wifi(b), rss, s))
              for tr, s, b, rss in wifi]
    feats = extract_magnetic_features(mag)
    mag_ms = to_ms(mag_tau)
    for i, t in enumerate(mag_ms):
        for f in feats:
            events.append((float(t), 1, RawEvent(float(t), f, float(feats[f][i]), -1)))
    events.sort(key=lambda e: (e[0], e[1]))
    raw = [e[2] for e in events]
    truth_tau = (np.array([e.t for e in raw]) - t0_ms) / 1000.0
    truth = position(truth_tau) if raw else np.zeros((0, 2))
    record = WalkRecord(path, t_start, t_end, StepEvents(), tuple(raw))
    return SimulatedWalk(
        record=record,
        accel_t=to_ms(tau),
        accel=accel,
        mag_t=mag_ms,
        mag=mag,
        wifi=[(float(to_ms(tr)), s, b, rss) for tr, s, b, rss in wifi],
        truth=truth,
        true_steps=to_ms(true_steps),
        stride_m=stride,
    )


def simulate_point(env, location, plan, rng, t0_ms=DEFAULT_T0_MS, scan_id_base=0):
    """Stand at ``location`` for ``plan.scans_per_point`` back-to-back scans."""
    xy = np.array([[location.x, location.y]])
    wifi = []
    t = 0.0
    for k in range(plan.scans_per_point):
        dur = float(rng.uniform(*plan.scan_interval_ms)) / 1000.0
        wifi += _scan_readings(env, plan, rng, lambda tr: True, t, t + dur, scan_id_base + k,
                               lambda tau: xy)
        t += dur
    n_mag = max(1, int(math.floor(t * plan.mag_rate_hz)))
    mag_tau = np.arange(n_mag) / plan.mag_rate_hz
    heading = float(rng.uniform(-math.pi, math.pi))
    mag = magnetometer(env, np.repeat(xy, n_mag, axis=0), heading, rng, plan.mag_noise_ut)
    return SimulatedPoint(
        location=location,
        t_start=t0_ms,
        t_end=t0_ms + 1000.0 * t,
        wifi=[(t0_ms + 1000.0 * tr, s, b, rss) for tr, s, b, rss in wifi],
        mag_t=t0_ms + 1000.0 * mag_tau,
        mag=mag,
    )


def simulate_queries(env, points, plan, rng, with_magnetic=True):
    """One scan (plus one magnetometer sample) at each test point."""
    out = []
    for loc in points:
        xy = np.array([[loc.x, loc.y]])
        dur = float(rng.uniform(*plan.scan_interval_ms)) / 1000.0
        readings = [(FeatureId.wifi(b), rss) for _, _, b, rss in
                    _scan_readings(env, plan, rng, lambda tr: True, 0.0, dur, 0, lambda tau: xy)]
        if with_magnetic:
            heading = float(rng.uniform(-math.pi, math.pi))
            feats = extract_magnetic_features(magnetometer(env, xy, heading, rng, plan.mag_noise_ut))
            readings += [(f, float(v[0])) for f, v in feats.items()]
        out.append((QueryObservation.from_readings(readings), loc))
    return out


# ---------------------------------------------------------------------------
# survey cost and walking-speed rule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SurveyCost:
    setup_min: float
    collection_min: float

    @property
    def total_min(self):
        return self.setup_min + self.collection_min


def survey_cost(plan, setup_minutes, per_point_seconds=None, per_path_minutes=None,
                scan_seconds=None, per_point_overhead_seconds=0.0):
    """Setup, collection and total minutes for a survey plan.

    Point surveys cost ``per_point_seconds`` at each marker, or, when that is
    not given, ``scans_per_point * scan_seconds + per_point_overhead_seconds``.
    Path surveys cost ``per_path_minutes`` per traversal in ``plan.paths``, or
    the traversal time at ``plan.speed_mps`` when that is not given.
    """
    if setup_minutes < 0:
        raise ValueError("setup time must be non-negative")
    if plan.mode == POINT_BASED:
        n = len(plan.points)
        if per_point_seconds is None:
            if scan_seconds is None:
                scan_seconds = 0.5e-3 * sum(plan.scan_interval_ms)
            per_point_seconds = plan.scans_per_point * scan_seconds + per_point_overhead_seconds
        if per_point_seconds < 0:
            raise ValueError("per-point time must be non-negative")
        collection = n * per_point_seconds / 60.0
    else:
        if per_path_minutes is not None:
            if per_path_minutes < 0:
                raise ValueError("per-path time must be non-negative")
            collection = len(plan.paths) * per_path_minutes
        else:
            collection = sum(p.length for p in plan.paths) / plan.speed_mps / 60.0
    return SurveyCost(float(setup_minutes), float(collection))


# Table of survey times reported for a ~500 m^2 office floor: 338 markers and
# 12 paths walked in both directions.  Per-marker and per-traversal times are
# back-computed from the reported collection minutes.
REFERENCE_MARKERS = 338
REFERENCE_TRAVERSALS = 24
REFERENCE_SURVEYS = {
    "point-1scan": (POINT_BASED, 120.0, 67.0, 1),
    "point-10scans": (POINT_BASED, 120.0, 135.0, 10),
    "point-30scans": (POINT_BASED, 120.0, 270.0, 30),
    "path-fast": (PATH_BASED, 15.0, 16.0, None),
    "path-normal": (PATH_BASED, 15.0, 27.0, None),
    "path-slow": (PATH_BASED, 15.0, 46.0, None),
}


def reference_cost(name):
    """Recompute one row of the reference survey-time table."""
    mode, setup, collection, scans = REFERENCE_SURVEYS[name]
    dummy = Location(0.0, 0.0)
    if mode == POINT_BASED:
        plan = SurveyPlan(mode=mode, points=(dummy,) * REFERENCE_MARKERS, scans_per_point=scans)
        return survey_cost(plan, setup, per_point_seconds=collection * 60.0 / REFERENCE_MARKERS)
    seg = PathSegment(dummy, Location(1.0, 0.0))
    plan = SurveyPlan(mode=mode, paths=(seg,) * REFERENCE_TRAVERSALS)
    return survey_cost(plan, setup, per_path_minutes=collection / REFERENCE_TRAVERSALS)


def recommend_speed(t_scan_ms):
    """Fastest cadence (steps/s) that still fits one WiFi scan per step, to 2 decimals."""
    if not t_scan_ms > 0:
        raise ValueError("scan time must be positive")
    return round(1000.0 / float(t_scan_ms), 2)
