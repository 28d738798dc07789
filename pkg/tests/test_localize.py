import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pathsurvey.fingerprint import FingerprintMap
from pathsurvey.geometry import MAGNITUDE_FEATURE, FeatureId, GridSpec, Location, build_grid
from pathsurvey.gp import GPModel, Hyperparams
from pathsurvey.localize import (NoFixError, QueryObservation, evaluate, localize,
                                 log_likelihood_at, usable_features)

A = FeatureId.wifi("02:00:00:00:00:0a")
B = FeatureId.wifi("02:00:00:00:00:0b")
C = FeatureId.wifi("02:00:00:00:00:0c")


def gauss_pdf(v, m, s2):
    return math.exp(-(v - m) ** 2 / (2 * s2)) / math.sqrt(2 * math.pi * s2)


def corridor_map(seed=0, res=0.5):
    rng = np.random.default_rng(seed)
    g = build_grid((0, 0, 12, 3), res)
    X = rng.uniform([0, 0], [12, 3], (40, 2))
    models = {}
    for f, ap in ((A, (0, 0)), (B, (12, 3)), (C, (6, -2))):
        d = np.hypot(X[:, 0] - ap[0], X[:, 1] - ap[1])
        models[f] = GPModel(X, -40 - 25 * np.log10(np.maximum(d, 1)), Hyperparams(60.0, 6.0, 2.0))
    models[MAGNITUDE_FEATURE] = GPModel(X, 45 + 4 * np.sin(X[:, 0]), Hyperparams(10.0, 2.0, 0.1))
    return FingerprintMap(models, g)


def test_log_likelihood_examples():
    fmap = corridor_map()
    x = Location(3.3, 1.2)
    m, v = fmap.models[A].predict_one(x)
    peak = -0.5 * math.log(2 * math.pi * v)
    assert log_likelihood_at(fmap, x, A, m) == pytest.approx(peak, rel=1e-12)
    assert log_likelihood_at(fmap, x, A, m + math.sqrt(v)) == pytest.approx(peak - 0.5, rel=1e-12)
    for val in (-90.0, -55.5, -31.0):
        assert math.exp(log_likelihood_at(fmap, x, A, val)) == pytest.approx(gauss_pdf(val, m, v), rel=1e-12)
    with pytest.raises(KeyError):
        log_likelihood_at(fmap, x, FeatureId.wifi("02:00:00:00:00:ff"), -50)


def test_single_feature_two_cell_brute_force():
    g = build_grid((0, 0, 2, 1), 1.0)
    h = Hyperparams(25.0, 0.2, 1.0)
    model = GPModel([[0.5, 0.5], [1.5, 0.5]], [-50.0, -70.0], h, center=False)
    fmap = FingerprintMap({A: model}, g)
    means, variances = model.predict(g.candidates())
    obs = float(means[0])
    brute = [math.log(gauss_pdf(obs, means[i], variances[i])) for i in range(2)]
    r = localize(fmap, [A], QueryObservation(((A, obs),)), keep_surface=True)
    assert r.cell_index == int(np.argmax(brute)) == 0
    assert r.estimate == Location(0.5, 0.5)
    np.testing.assert_allclose(r.per_cell_loglik, brute, rtol=1e-12)


def test_symmetric_tie_goes_to_lower_index():
    # an empty model predicts the prior in every cell: an exact tie everywhere
    g = build_grid((0, 0, 2, 1), 1.0)
    fmap = FingerprintMap({A: GPModel(np.zeros((0, 2)), [], Hyperparams(25.0, 1.0, 1.0))}, g)
    r = localize(fmap, [A], QueryObservation(((A, -60.0),)), keep_surface=True)
    assert r.per_cell_loglik[0] == r.per_cell_loglik[1]
    assert r.cell_index == 0
    masked = GridSpec(g.origin, 1.0, 2, 1, np.array([[False, True]]))
    assert localize(FingerprintMap(fmap.models, masked), [A], QueryObservation(((A, -60.0),))).cell_index == 1


def test_no_fix_and_usable_features():
    fmap = corridor_map()
    q = QueryObservation(((C, -60.0),))
    with pytest.raises(NoFixError):
        localize(fmap, [A, B], q)
    q = QueryObservation.from_readings([(A, -50.0), (C, -60.0), (MAGNITUDE_FEATURE, 45.0)])
    assert usable_features(fmap, [A, B], q) == [A, MAGNITUDE_FEATURE]
    r = localize(fmap, [A, B], q)
    assert r.used_features == [A, MAGNITUDE_FEATURE]
    assert fmap.grid.is_walkable([[r.estimate.x, r.estimate.y]])[0]


def test_query_validation_and_averaging():
    q = QueryObservation.from_readings([(A, -50.0), (A, -60.0), (B, -70.0)])
    assert q.as_dict() == {A: -55.0, B: -70.0}
    with pytest.raises(ValueError):
        QueryObservation(((A, -50.0), (A, -52.0)))
    with pytest.raises(ValueError):
        QueryObservation(((A, -120.0),))


@given(st.integers(0, 200), st.floats(-50, 50))
def test_argmax_invariances(seed, shift):
    fmap = corridor_map(seed % 5)
    rng = np.random.default_rng(seed)
    x = fmap.grid.candidates()[rng.integers(len(fmap.grid.candidates()))]
    vals = [(f, float(np.clip(fmap.models[f].predict_one(x)[0] + rng.normal(0, 2), -100, 0)))
            for f in (A, B, C)]
    q = QueryObservation(tuple(vals))
    base = localize(fmap, [A, B, C], q, keep_surface=True)
    # a constant added to every cell's total leaves the argmax alone
    assert int(np.argmax(base.per_cell_loglik + shift)) == int(np.argmax(base.per_cell_loglik))
    # a feature whose surface is constant over the grid changes nothing
    flat = FeatureId.wifi("02:00:00:00:00:0f")
    fm2 = FingerprintMap({**fmap.models, flat: GPModel(np.zeros((0, 2)), [], Hyperparams(4, 1, 1))},
                         fmap.grid)
    q2 = QueryObservation(tuple(sorted(vals + [(flat, -70.0)])))
    assert localize(fm2, [A, B, C, flat], q2).cell_index == base.cell_index
    # restricting the grid to a window around the previous argmax
    row, col = divmod(base.cell_index, fmap.grid.n_cols)
    mask = np.zeros_like(fmap.grid.walkable_mask)
    mask[max(row - 2, 0):row + 3, max(col - 3, 0):col + 4] = True
    sub = GridSpec(fmap.grid.origin, fmap.grid.resolution, fmap.grid.n_cols, fmap.grid.n_rows,
                   mask & fmap.grid.walkable_mask)
    assert localize(fmap, [A, B, C], q, grid=sub).cell_index == base.cell_index


def test_self_consistency_on_well_conditioned_map():
    # training points at every cell centre with small noise keep the
    # predictive variance nearly flat, so the mean match decides the argmax
    g = build_grid((0, 0, 12, 3), 0.5)
    X = g.candidates()
    models = {}
    for f, ap in ((A, (0, 0)), (B, (12, 3)), (C, (6, -2))):
        d = np.hypot(X[:, 0] - ap[0], X[:, 1] - ap[1])
        models[f] = GPModel(X, -40 - 25 * np.log10(np.maximum(d, 1)), Hyperparams(60.0, 6.0, 0.5))
    fmap = FingerprintMap(models, g)
    tests = []
    for i in range(0, len(X), 5):
        x = Location(*X[i])
        q = QueryObservation(tuple((f, fmap.models[f].predict_one(x)[0]) for f in (A, B, C)))
        tests.append((q, x))
    stats = evaluate(fmap, [A, B, C], tests)
    assert stats.errors.max() <= g.resolution
    again = evaluate(fmap, [A, B, C], tests)
    assert stats.summary() == again.summary()
    rows = stats.cdf()
    assert rows[-1][1] == 1.0 and all(a[0] <= b[0] for a, b in zip(rows, rows[1:]))


def test_evaluate_counts_no_fix_and_rejects_empty():
    fmap = corridor_map()
    tests = [(QueryObservation(((C, -60.0),)), Location(1, 1)),
             (QueryObservation(((A, -60.0),)), Location(1, 1))]
    s = evaluate(fmap, [A], tests)
    assert s.n_nofix == 1 and s.errors.size == 1
    with pytest.raises(ValueError):
        evaluate(fmap, [A], [])
