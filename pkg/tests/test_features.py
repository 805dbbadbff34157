import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from propml.errors import DegenerateGeometryError, SchemaError, UnknownReferenceError
from propml.features import (
    BASE_FEATURES, LOS_SENTINEL, FeatureMatrix, angular_separations, assemble_features, build_feature_matrix,
    feature_names, point_features, read_features_csv, write_features_csv,
)
from propml.profile import extract_profile, summarize_profile
from propml.scenario import BinnedMeasurement

from conftest import flat_geo, make_geo, site
from test_profile import one_building_scene


def test_due_north_is_boresight():
    assert angular_separations(site(x=0, y=0, azimuth=0), 0, 50, 0, 0)[1] == 0


def test_azimuth_wraps():
    s = site(x=0, y=0, azimuth=350)
    r = math.radians(10)
    assert angular_separations(s, math.sin(r) * 10, math.cos(r) * 10, 0, 0)[1] == pytest.approx(20)


def test_three_four_five():
    d, _, _, _, d_man = angular_separations(site(x=0, y=0), 30, 40, 0, 0)
    assert (d, d_man) == (50, 70)


def test_level_geometry_vertical_angle():
    _, _, phi_ver, d_vert, _ = angular_separations(site(x=0, y=0, tilt=5), 30, 40, 12.0, 12.0)
    assert phi_ver == -5 and d_vert == 0


def test_coincident_points():
    with pytest.raises(DegenerateGeometryError):
        angular_separations(site(x=1, y=1), 1, 1, 0, 0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 360, exclude_max=True), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.integers(-720, 720))
def test_rotation_invariance_and_distance_bounds(az, dx, dy, rot):
    if math.hypot(dx, dy) < 1e-3:
        return
    d, th, _, _, d_man = angular_separations(site(x=0, y=0, azimuth=az), dx, dy, 0, 0)
    assert 0 <= th <= 180
    assert d <= d_man * (1 + 1e-12) and d_man <= math.sqrt(2) * d * (1 + 1e-12)
    c, s_ = math.cos(math.radians(rot)), math.sin(math.radians(rot))
    # rotating the scene clockwise by rot adds rot to every bearing
    rx, ry = dx * c + dy * s_, -dx * s_ + dy * c
    th2 = angular_separations(site(x=0, y=0, azimuth=(az + rot) % 360), rx, ry, 0, 0)[1]
    assert th2 == pytest.approx(th, abs=1e-6)


def test_open_flat_scene_vector():
    geo = flat_geo()
    v = assemble_features(geo, site(h_bs=20), (80.5, 10.0))
    assert v.los == 1 and v.n_pen == 0 and v.d_indoor == 0
    assert v.d_fd == v.d_ld == LOS_SENTINEL
    assert v.d_outdoor_c[0] > 0 and np.all(v.d_outdoor_c[1:] == 0)
    assert np.all(v.n_pen_c == 0) and np.all(v.d_indoor_c == 0)


def test_vector_matches_profile_summary():
    geo = one_building_scene()
    s0 = site(x=0.0, h_bs=10.0)
    v = assemble_features(geo, s0, (100.0, 10.0))
    summ = summarize_profile(extract_profile(geo, s0, 100.0, 10.0), geo)
    assert (v.los, v.n_pen, v.d_indoor, v.d_fd, v.d_ld) == (0, summ.n_pen, summ.d_indoor, summ.d_fd, summ.d_ld)


def test_bin_evaluated_at_centre():
    geo = flat_geo(nrows=40)
    b = BinnedMeasurement(5, 1, 10.0, "c1", -80.0, 3)
    assert np.array_equal(assemble_features(geo, site(), b).as_array(),
                          assemble_features(geo, site(), (55.0, 15.0)).as_array())


def test_translation_invariance():
    rng = np.random.default_rng(1)
    b = np.zeros((30, 60))
    b[10:20, 20:35] = 15
    c = np.where(b > 0, 3, 1)
    g = rng.uniform(0, 2, b.shape)
    a = make_geo(g, b, c, cellsize=2.0)
    shifted = make_geo(g, b, c, cellsize=2.0, xll=1000.0, yll=-500.0)
    v1 = assemble_features(a, site(x=3.1, y=30.3, h_bs=6), (110.7, 22.9)).as_array()
    v2 = assemble_features(shifted, site(x=1003.1, y=-469.7, h_bs=6), (1110.7, -477.1)).as_array()
    assert np.allclose(v1, v2, atol=1e-9)


def test_summary_invariants_on_random_assemblies(small_scenario):
    geo = small_scenario.geo
    rng = np.random.default_rng(3)
    C = geo.clutter_count
    for _ in range(200):
        s0 = small_scenario.sites[int(rng.integers(len(small_scenario.sites)))]
        v = assemble_features(geo, s0, tuple(rng.uniform(0, 400, 2))).as_array()
        outdoor, out_c = v[BASE_FEATURES.index("d_outdoor")], v[13 + 2 * C: 13 + 3 * C]
        assert out_c.sum() == pytest.approx(outdoor, abs=1e-9)


def test_matrix_rows_and_width(small_scenario):
    geo = flat_geo(nrows=40)
    binned = [BinnedMeasurement(i, 1, 10.0, "c1", -80.0 - i, 1) for i in (3, 1, 2)]
    m = build_feature_matrix(geo, [site()], binned)
    assert len(m) == 3 and list(m.y) == [-81, -82, -83]
    assert m.keys == [(1, 1, "c1"), (2, 1, "c1"), (3, 1, "c1")]
    assert m.X.shape[1] == 13 + 3 * geo.clutter_count
    assert list(m.categorical.nonzero()[0]) == [5, 11, 12]


def test_width_for_eight_classes():
    assert len(feature_names(8)) == 37


def test_empty_matrix_has_header(tmp_path):
    m = build_feature_matrix(flat_geo(), [site()], [])
    assert len(m) == 0 and len(m.names) == 13 + 3 * 4
    write_features_csv(m, tmp_path / "f.csv")
    back = read_features_csv(tmp_path / "f.csv")
    assert back.names == m.names and len(back) == 0


def test_unknown_cell():
    with pytest.raises(UnknownReferenceError, match="zz"):
        build_feature_matrix(flat_geo(), [site()], [BinnedMeasurement(1, 1, 1.0, "zz", -80, 1)])


def test_csv_round_trip_is_lossless(small_features, tmp_path):
    write_features_csv(small_features, tmp_path / "a.csv")
    back = read_features_csv(tmp_path / "a.csv")
    assert back.names == small_features.names and back.keys == small_features.keys
    assert np.array_equal(back.X, small_features.X) and np.array_equal(back.y, small_features.y)
    write_features_csv(back, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_csv_schema_errors(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError):
        read_features_csv(path)


def test_point_features_match_assembly(small_scenario):
    geo, sites = small_scenario.geo, small_scenario.sites
    pts = [(123.4, 55.5, sites[0].cell_id), (123.4, 55.5, sites[1].cell_id), (300.2, 10.1, sites[4].cell_id)]
    rows = point_features(geo, sites, pts)
    by_id = {s.cell_id: s for s in sites}
    for row, (x, y, c) in zip(rows, pts):
        assert np.array_equal(row, assemble_features(geo, by_id[c], (x, y)).as_array())


def test_select_and_take():
    m = FeatureMatrix(["a", "b", "c"], np.arange(6.0).reshape(2, 3), [1.0, 2.0], [(0, 0, "x"), (1, 0, "x")])
    sub = m.select(["c", "a"])
    assert sub.names == ["c", "a"] and sub.X.tolist() == [[2, 0], [5, 3]]
    assert m.take([1]).y.tolist() == [2.0]
    with pytest.raises(UnknownReferenceError):
        m.select(["q"])
    with pytest.raises(SchemaError):
        FeatureMatrix(["a"], [[1.0], [2.0]], [1.0])
