import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from propml.errors import BoundsError, DegenerateGeometryError
from propml.profile import extract_profile, sample_positions, summarize_profile
from propml.synth import ScenarioConfig, generate_scenario

from conftest import flat_geo, make_geo, site
from oracles import ray_los_oracle


def one_building_scene(height=20.0, spans=((40, 60),), clutter_class=3):
    """1 m cells along y in [0, 20); buildings occupy x in each span; the UE cell is raised to 10 m."""
    ground = np.zeros((20, 102))
    ground[:, 100] = 10.0
    building = np.zeros_like(ground)
    clutter = np.zeros_like(ground)
    for lo, hi in spans:
        building[:, lo:hi] = height
        clutter[:, lo:hi] = clutter_class
    return make_geo(ground, building, clutter)


def test_flat_open_city_is_clear():
    geo = flat_geo()
    p = extract_profile(geo, site(x=0.5, h_bs=20.0), 110.5, 10.0)
    assert np.all(p.z_ray >= p.z_ground)
    s = summarize_profile(p, geo)
    assert s.los and s.n_pen == 0 and s.d_indoor == 0
    assert s.d_fd is None and s.d_ld is None
    assert s.d_outdoor == pytest.approx(p.d, abs=p.step)
    assert s.d_outdoor_c[0] == pytest.approx(s.d_outdoor)


def test_single_building_segment():
    geo = one_building_scene()
    p = extract_profile(geo, site(x=0.0, h_bs=10.0), 100.0, 10.0)
    assert p.z_bs == p.z_ue == 10.0
    s = summarize_profile(p, geo)
    assert not s.los
    assert s.n_pen == 1 and s.n_pen_c[3] == 1
    assert s.d_fd == pytest.approx(40.0, abs=p.step)
    assert s.d_ld == pytest.approx(60.0, abs=p.step)
    assert s.d_indoor == pytest.approx(20.0, abs=p.step)
    assert s.d_indoor_c[3] == pytest.approx(s.d_indoor)


def test_two_separated_buildings():
    geo = one_building_scene(spans=((20, 30), (60, 75)))
    s = summarize_profile(extract_profile(geo, site(x=0.0, h_bs=10.0), 100.0, 10.0), geo)
    assert s.n_pen == 2 and s.n_pen_c.sum() == 2
    assert s.d_indoor == pytest.approx(25.0, abs=1.0)


def test_adjacent_buildings_count_once():
    geo = one_building_scene(spans=((20, 30), (30, 45)))
    s = summarize_profile(extract_profile(geo, site(x=0.0, h_bs=10.0), 100.0, 10.0), geo)
    assert s.n_pen == 1


def test_low_building_below_ray_is_clear():
    geo = one_building_scene(height=5.0)
    s = summarize_profile(extract_profile(geo, site(x=0.0, h_bs=10.0), 100.0, 10.0), geo)
    assert s.los


def test_bs_rooftop_is_not_an_obstruction():
    ground = np.zeros((10, 60))
    building = np.zeros_like(ground)
    building[:, 0:3] = 30.0
    geo = make_geo(ground, building)
    s = summarize_profile(extract_profile(geo, site(x=1.5, y=5.0, h_bs=3.0), 50.5, 5.0), geo)
    assert s.los


def test_indoor_ue_registers_indoor_distance():
    # UE at x=35.5 inside a 40 m block; the ray climbs to its roof through the block's wall
    ground = np.zeros((10, 60))
    building = np.zeros_like(ground)
    building[:, 30:40] = 40.0
    geo = make_geo(ground, building)
    s = summarize_profile(extract_profile(geo, site(x=0.5, y=5.0, h_bs=10.0), 35.5, 5.0), geo)
    assert not s.los and s.n_pen == 1
    assert 0 < s.d_indoor <= 5.5


def test_degenerate_and_out_of_bounds():
    geo = flat_geo()
    with pytest.raises(DegenerateGeometryError):
        extract_profile(geo, site(x=5.0, y=5.0), 5.0, 5.0)
    with pytest.raises(BoundsError):
        extract_profile(geo, site(x=5.0, y=5.0), 500.0, 5.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 5000), st.floats(0.05, 10))
def test_sample_count(d, step):
    t = sample_positions(d, step)
    assert t.size == max(1, math.floor(d / step)) + 1
    assert t[0] == 0 and t[-1] == d and np.all(np.diff(t) > 0)


def test_profile_ray_is_linear():
    geo = one_building_scene()
    p = extract_profile(geo, site(x=0.0, h_bs=7.0), 100.0, 3.0)
    assert np.allclose(p.z_ray, p.z_bs + (p.z_ue - p.z_bs) * p.t / p.d)
    assert p.step == pytest.approx(p.t[1])


def test_smaller_step_never_clears_obstruction():
    geo = one_building_scene(height=12.0, spans=((50, 51),))
    for step in (0.5, 0.25, 0.1):
        s = summarize_profile(extract_profile(geo, site(x=0.0, h_bs=10.0), 100.0, 10.0, step=step), geo)
        assert not s.los


@pytest.fixture(scope="module")
def random_city():
    return generate_scenario(ScenarioConfig(area=300.0, n_sites=1, ue_density=0.0), seed=5).geo


def test_summary_invariants_and_oracle_agreement(random_city):
    geo = random_city
    rng = np.random.default_rng(0)
    agree = 0
    n = 300
    for _ in range(n):
        bx, by, ux, uy = rng.uniform(1, 299, 4)
        s0 = site(x=bx, y=by, h_bs=float(rng.uniform(1, 30)))
        p = extract_profile(geo, s0, ux, uy)
        s = summarize_profile(p, geo)
        assert s.n_pen_c.sum() == s.n_pen
        assert s.d_indoor_c.sum() == pytest.approx(s.d_indoor, abs=1e-9)
        assert s.d_outdoor_c.sum() == pytest.approx(s.d_outdoor, abs=1e-9)
        assert abs(s.d_indoor + s.d_outdoor - p.d) <= p.step
        if s.los:
            assert s.n_pen == 0 and s.d_fd is None
        else:
            assert s.d_fd <= s.d_ld
        los, indoor, runs = ray_los_oracle(geo, s0, ux, uy, runs=True)
        agree += los == s.los
        assert abs(indoor - s.d_indoor) <= 2 * geo.cellsize
        assert abs(runs - s.n_pen) <= 1
    assert agree >= 0.99 * n
