import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from shapely.geometry import Point, Polygon

from pathsurvey.geometry import (MAGNITUDE_FEATURE, FeatureId, GridSpec, Location, PathSegment,
                                 TaggedObservation, build_grid, point_along, points_along,
                                 points_in_polygon)

coord = st.floats(-1e3, 1e3, allow_nan=False)


def test_grid_1m_by_half_meter():
    g = build_grid((0, 0, 1, 1), 0.5)
    assert (g.n_cols, g.n_rows) == (2, 2)
    assert g.walkable_mask.all()
    np.testing.assert_allclose(g.candidates(), [[.25, .25], [.75, .25], [.25, .75], [.75, .75]])


def test_grid_10m_default_resolution():
    g = build_grid((0, 0, 10, 10))
    assert (g.n_cols, g.n_rows) == (100, 100)


def test_l_shaped_mask_against_shapely():
    poly = [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]
    g = build_grid((0, 0, 2, 2), 1.0, poly)
    ref = Polygon(poly)
    expected = [ref.contains(Point(*c)) for c in g.cell_centers()]
    assert g.walkable_mask.ravel().tolist() == expected
    assert len(g.candidate_indices()) == 3


@given(st.floats(0.3, 17.0), st.floats(0.3, 9.0), st.sampled_from([0.1, 0.25, 0.3, 0.7]))
def test_cell_count_is_ceil(w, h, res):
    if res > w or res > h:
        return
    g = build_grid((1.0, -2.0, 1.0 + w, -2.0 + h), res)
    assert g.n_cols * g.n_rows == math.ceil(w / res - 1e-9) * math.ceil(h / res - 1e-9)


def test_random_polygon_mask_matches_shapely(rng):
    ang = np.sort(rng.uniform(0, 2 * np.pi, 9))
    rad = rng.uniform(2, 5, 9)
    poly = [(5 + r * math.cos(a), 5 + r * math.sin(a)) for a, r in zip(ang, rad)]
    g = build_grid((0, 0, 10, 10), 0.2, poly)
    ref = Polygon(poly)
    for c in g.candidates():
        assert ref.contains(Point(*c))
    outside = g.cell_centers()[~g.walkable_mask.ravel()]
    assert not any(ref.contains(Point(*c)) for c in outside[::7])


@pytest.mark.parametrize("bounds,res", [((0, 0, 0, 5), 0.1), ((0, 0, 5, 5), 0.0),
                                        ((0, 0, 1, 1), 2.0), ((0, 0, 5, -1), 0.1)])
def test_grid_errors(bounds, res):
    with pytest.raises(ValueError):
        build_grid(bounds, res)


def test_grid_indexing_and_roundtrip():
    g = build_grid((0, 0, 3, 2), 0.5, [(0, 0), (3, 0), (3, 1), (0, 1)])
    assert g.cell_of([[0.1, 0.1], [2.9, 1.9], [-1, 0]]).tolist() == [0, 23, -1]
    assert g.cell_center(7) == Location(0.75, 0.75)
    assert g.is_walkable([[0.2, 0.2], [0.2, 1.7]]).tolist() == [True, False]
    assert GridSpec.from_dict(g.to_dict()) == g
    with pytest.raises(ValueError):
        g.walkable_mask[0, 0] = False


def test_point_along_examples():
    p = PathSegment(Location(0, 0), Location(10, 0))
    assert point_along(p, 0) is p.start
    assert point_along(p, 1) is p.end
    assert point_along(p, 0.3) == Location(3, 0)
    with pytest.raises(ValueError):
        point_along(p, 1.01)


@given(coord, coord, coord, coord, st.floats(0, 1))
def test_point_along_distance(x0, y0, x1, y1, f):
    if math.hypot(x1 - x0, y1 - y0) < 1e-3:
        return
    p = PathSegment(Location(x0, y0), Location(x1, y1))
    q = point_along(p, f)
    assert q.distance(p.start) == pytest.approx(f * p.length, rel=1e-9, abs=1e-9)
    v = points_along(p, [0.0, f, 1.0])
    assert tuple(v[0]) == (p.start.x, p.start.y) and tuple(v[2]) == (p.end.x, p.end.y)


def test_types_validate():
    with pytest.raises(ValueError):
        Location(math.nan, 0)
    with pytest.raises(ValueError):
        PathSegment(Location(1, 1), Location(1, 1))
    with pytest.raises(ValueError):
        FeatureId.wifi("not-a-mac")
    assert FeatureId.wifi("AA:BB:CC:00:11:22").id == "aa:bb:cc:00:11:22"
    with pytest.raises(ValueError):
        TaggedObservation(FeatureId.wifi("aa:bb:cc:00:11:22"), 3.0, Location(0, 0))
    TaggedObservation(MAGNITUDE_FEATURE, 48.0, Location(0, 0))


def test_points_in_polygon_square():
    sq = [(0, 0), (1, 0), (1, 1), (0, 1)]
    assert points_in_polygon([[.5, .5], [1.5, .5], [-.1, .2]], sq).tolist() == [True, False, False]
