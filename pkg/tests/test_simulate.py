import numpy as np
import pytest

from pathsurvey.fingerprint import GPConfig, ImputationConfig, extract_magnetic_features, train_map
from pathsurvey.geometry import Location, PathSegment
from pathsurvey.pipeline import point_training, simulate_path_survey, simulate_point_survey
from pathsurvey.simulate import (REFERENCE_SURVEYS, AccessPoint, EnvironmentSpec, SurveyPlan,
                                 corridor_environment, corridor_paths, marker_lattice, recommend_speed,
                                 reference_cost, sample_rss, simulate_walk, survey_cost, walk_rng)
from pathsurvey.steps import detect_steps
from pathsurvey.tagging import SPEED, STRIDE, tag_times

AP = AccessPoint("02:00:00:00:00:01", Location(0, 0), -40.0, 3.0, 0.0)


def test_rss_reference_distance_and_monotone(rng):
    env = corridor_environment(seed=1)
    assert sample_rss(env, AP, Location(1, 0), rng) == -40.0
    assert sample_rss(env, AP, Location(0.3, 0.2), rng) == -40.0
    vals = [sample_rss(env, AP, Location(d, 0), rng) for d in np.linspace(1.01, 80, 40)]
    assert all(b < a for a, b in zip(vals, vals[1:]) if b > -100)


def test_rss_sample_mean(rng):
    env = corridor_environment(seed=1)
    ap = AccessPoint("02:00:00:00:00:02", Location(0, 0), -40.0, 3.0, 4.0)
    loc = Location(5, 0)
    s = np.array([sample_rss(env, ap, loc, rng) for _ in range(10_000)])
    assert abs(s.mean() - ap.mean_rss([[5, 0]])[0]) <= 3 * 4.0 / 100
    assert s.min() >= -100 and s.max() <= 0


def test_ap_validation():
    with pytest.raises(ValueError):
        AccessPoint("02:00:00:00:00:01", Location(0, 0), pathloss_exponent=6.0)
    with pytest.raises(ValueError):
        AccessPoint("02:00:00:00:00:01", Location(0, 0), shadow_sigma=-1.0)


def line_env():
    env = corridor_environment(length=20, width=3, n_aps=4, seed=2)
    return env, PathSegment(Location(0.5, 1.5), Location(10.5, 1.5))


def test_constant_speed_truth_equals_speed_tags():
    env, path = line_env()
    w = simulate_walk(env, path, SurveyPlan(speed_mps=1.0), walk_rng(0, 0))
    t = np.array([e.t for e in w.record.raw_events])
    locs, ok, _ = tag_times(w.record, t, SPEED)
    assert ok.all()
    assert np.abs(locs - w.truth).max() <= 1e-9


def test_ten_meter_walk_has_twenty_steps():
    env, path = line_env()
    w = simulate_walk(env, path, SurveyPlan(speed_mps=1.0, step_frequency_hz=2.0), walk_rng(0, 1))
    assert abs(len(w.true_steps) - 20) <= 1
    assert abs(detect_steps(w.accel_t, w.accel).K - len(w.true_steps)) <= 1
    assert w.stride_m == pytest.approx(0.5)


def test_modulated_speed_stride_beats_speed_with_oracle_steps():
    env, path = line_env()
    plan = SurveyPlan(speed_mps=1.0, speed_modulation=0.5)
    for seed in range(5):
        w = simulate_walk(env, path, plan, walk_rng(seed, 0))
        rec = w.with_steps(w.true_steps)
        t = np.array([e.t for e in rec.raw_events])
        e_speed = np.linalg.norm(tag_times(rec, t, SPEED)[0] - w.truth, axis=1).mean()
        e_stride = np.linalg.norm(tag_times(rec, t, STRIDE)[0] - w.truth, axis=1).mean()
        assert e_speed > 0.05 and e_stride < e_speed


def test_walk_streams_are_deterministic_and_consistent():
    env, path = line_env()
    a = simulate_walk(env, path, SurveyPlan(speed_modulation=0.3), walk_rng(4, 2))
    b = simulate_walk(env, path, SurveyPlan(speed_modulation=0.3), walk_rng(4, 2))
    assert np.array_equal(a.accel, b.accel) and np.array_equal(a.mag, b.mag)
    assert a.wifi == b.wifi and a.record == b.record
    c = simulate_walk(env, path, SurveyPlan(speed_modulation=0.3), walk_rng(4, 3))
    assert not np.array_equal(a.accel, c.accel)
    # scan timing and scan composition
    sids = sorted({s for _, s, _, _ in a.wifi})
    for sid in sids:
        n = sum(1 for _, s, _, _ in a.wifi if s == sid)
        assert 1 <= n <= 8
    assert all(a.record.t_start <= e.t <= a.record.t_end for e in a.record.raw_events)
    assert len(sids) >= (a.record.t_end - a.record.t_start) / 420 - 1
    assert len(a.truth) == len(a.record.raw_events)


def test_magnetic_field_consistent_with_features():
    env = corridor_environment(seed=3)
    pts = np.random.default_rng(0).uniform([0, 0], [50, 3], (500, 2))
    M, Z = env.magnitude_field(pts), env.z_field(pts)
    assert np.all(np.abs(Z) < M)
    from pathsurvey.simulate import magnetometer
    mag = magnetometer(env, pts, 0.7, np.random.default_rng(1), 0.0)
    f = extract_magnetic_features(mag)
    np.testing.assert_allclose(list(f.values())[0], M, rtol=1e-12)
    np.testing.assert_allclose(list(f.values())[1], np.abs(Z), rtol=1e-12)


def test_path_outside_walkable_rejected():
    env, _ = line_env()
    with pytest.raises(ValueError, match="walkable"):
        simulate_walk(env, PathSegment(Location(1, 1), Location(1, 8)), SurveyPlan(), walk_rng(0, 0))


def test_environment_roundtrip_and_helpers():
    env = corridor_environment(seed=9)
    assert EnvironmentSpec.from_dict(env.to_dict()) == env
    assert len(env.aps) == 12 and len({a.bssid for a in env.aps}) == 12
    paths = corridor_paths(env)
    assert len(paths) == 4 and paths[1] == paths[0].reversed()
    markers = marker_lattice(env, 1.2)
    assert len(markers) == 41 * 2
    assert env.ap(env.aps[3].bssid.upper()) is env.aps[3]


def test_noiseless_dense_point_survey_recovers_path_loss():
    env = corridor_environment(length=12, width=3, n_aps=3, seed=5, shadow_sigma=0.0)
    plan = SurveyPlan(mode="point-based", scans_per_point=2)
    pts = simulate_point_survey(env, marker_lattice(env, 0.6), plan, seed=0)
    ts = point_training(pts, magnetic=False)
    fmap = train_map(ts, env.grid(0.25), "wifi", GPConfig(restarts=2), ImputationConfig(enabled=False))
    for f, model in fmap.models.items():
        X, y = ts.per_feature()[f]
        truth = env.ap(f.id).mean_rss(X)
        mean, _ = model.predict(X)
        assert np.all(np.abs(mean - truth) <= 2 * np.sqrt(model.hyper.sigma_n2) + 1e-9)


def test_survey_cost_reference_rows():
    c = reference_cost("point-30scans")
    assert (c.setup_min, round(c.collection_min, 9), round(c.total_min, 9)) == (120, 270, 390)
    c2 = reference_cost("path-normal")
    assert (c2.setup_min, c2.collection_min, c2.total_min) == (15, 27, 42)
    assert round(c.total_min / c2.total_min, 1) == 9.3
    for name, (_, setup, coll, _) in REFERENCE_SURVEYS.items():
        assert reference_cost(name).collection_min == pytest.approx(coll, rel=1e-12)


def test_survey_cost_modes():
    assert survey_cost(SurveyPlan(mode="point-based"), 10).collection_min == 0
    plan = SurveyPlan(mode="point-based", points=(Location(0, 0),) * 10, scans_per_point=30)
    assert survey_cost(plan, 5, scan_seconds=0.4, per_point_overhead_seconds=3).collection_min == pytest.approx(2.5)
    p = SurveyPlan(paths=(PathSegment(Location(0, 0), Location(60, 0)),) * 2, speed_mps=1.0)
    assert survey_cost(p, 0).collection_min == pytest.approx(2.0)
    assert survey_cost(p, 0, per_path_minutes=1.5).total_min == 3.0
    with pytest.raises(ValueError):
        survey_cost(p, -1)


@pytest.mark.parametrize("ms,expected", [(380, 2.63), (1420, 0.70), (780, 1.28), (1150, 0.87),
                                         (1000, 1.00)])
def test_recommend_speed(ms, expected):
    assert recommend_speed(ms) == expected


def test_recommend_speed_rejects_nonpositive():
    with pytest.raises(ValueError):
        recommend_speed(0)


def test_survey_helpers_are_seeded():
    env = corridor_environment(length=10, width=3, n_aps=3, seed=1)
    a = simulate_path_survey(env, corridor_paths(env, 1), SurveyPlan(), seed=3)
    b = simulate_path_survey(env, corridor_paths(env, 1), SurveyPlan(), seed=3)
    assert [w.wifi for w in a] == [w.wifi for w in b]
    assert a[1].record.t_start > a[0].record.t_end
    assert min(s for _, s, _, _ in a[1].wifi) > max(s for _, s, _, _ in a[0].wifi)
