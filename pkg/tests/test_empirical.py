import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from propml.empirical import (
    CostHataParams, EmpiricalConfig, Itu452Inputs, SpmParams, SuiParams, cost_hata, cost_hata_base,
    deygout_loss, empirical_predict, itu452, itu452_interpolation, knife_edge_loss, load_params, spm, sui,
    sui_bs_correction, sui_ue_correction, ue_height_correction,
)
from propml.errors import ConfigError, DomainError, UnknownReferenceError
from propml.profile import extract_profile

from conftest import flat_geo, make_geo, site
from test_profile import one_building_scene

# values evaluated by hand from the printed formulas, log base 10
COST_HATA_BASE_2110_30_1KM = 138.57936
SMALL_CITY_A_1P5_2110 = 0.049185
SUI_A_BS_30 = 4.795
SUI_TERMS_2110_30_1KM = 134.381
SPM_D1_H30 = 39.886
J_AT_ZERO = 6.03285


def test_cost_hata_base_term():
    assert cost_hata_base(CostHataParams(), 2110, 30, 1.0) == pytest.approx(COST_HATA_BASE_2110_30_1KM, abs=1e-3)


def test_small_city_ue_correction():
    assert ue_height_correction("small_city", 2110, 1.5) == pytest.approx(SMALL_CITY_A_1P5_2110, abs=1e-3)


def test_open_rural_ue_correction_form():
    assert ue_height_correction("open_rural", 2110, 1.5) == pytest.approx(3.2 * math.log10(17.625) ** 2 - 4.97)


@settings(max_examples=30, deadline=None)
@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(-1, 1))
def test_unit_distance_drops_slope_term(b1, b2, b3):
    p = CostHataParams(B1=b1, B2=b2, B3=b3)
    assert cost_hata_base(p, 2110, 30, 1.0) == pytest.approx(COST_HATA_BASE_2110_30_1KM, abs=1e-3)


def test_cost_hata_area_corrections():
    urban = cost_hata(CostHataParams(), 2110, 30, 1.5, 2.0)
    sub = cost_hata(CostHataParams(area="suburban"), 2110, 30, 1.5, 2.0)
    assert urban - sub == pytest.approx(2 * math.log10(2110 / 28) ** 2 + 5.4)
    with pytest.raises(ConfigError):
        CostHataParams(area="downtown")


def test_sui_corrections():
    p = SuiParams()
    assert sui_bs_correction(p, 30) == pytest.approx(SUI_A_BS_30, abs=1e-6)
    assert sui_ue_correction(p, 2.0) == 0.0
    assert sui(p, 2110, 30, 2.0, 1.0) == pytest.approx(p.intercept + SUI_TERMS_2110_30_1KM, abs=1e-2)


@pytest.mark.parametrize("fn", [cost_hata, sui])
def test_increasing_in_distance(fn):
    p = CostHataParams() if fn is cost_hata else SuiParams()
    d = np.linspace(1.01, 20, 200)
    losses = [fn(p, 2110, 30, 1.5, x) for x in d]
    assert np.all(np.diff(losses) > 0)


@pytest.mark.parametrize("fn", [cost_hata, sui])
def test_domain_errors(fn):
    p = CostHataParams() if fn is cost_hata else SuiParams()
    with pytest.raises(DomainError):
        fn(p, 2110, 30, 1.5, 0.0)
    with pytest.raises(DomainError):
        fn(p, -1, 30, 1.5, 1.0)


def test_knife_edge_values():
    assert knife_edge_loss(0.0) == pytest.approx(J_AT_ZERO, abs=1e-4)
    assert knife_edge_loss(-0.78) == 0.0
    assert knife_edge_loss(-2.0) == 0.0
    assert knife_edge_loss(-0.7) > 0


def test_deygout_unobstructed_is_zero():
    geo = flat_geo()
    assert deygout_loss(extract_profile(geo, site(h_bs=30), 110.5, 10.0), 2110) == 0.0


def test_deygout_monotone_in_obstacle_height():
    s0 = site(x=0.0, h_bs=10.0)
    losses = []
    for h in (0.0, 5.0, 9.0, 10.0, 12.0, 20.0, 40.0):
        geo = one_building_scene(height=h, spans=((50, 52),))
        losses.append(deygout_loss(extract_profile(geo, s0, 100.0, 10.0), 2110, rx_height=0.0))
    assert all(x >= 0 for x in losses)
    assert all(b >= a for a, b in zip(losses, losses[1:]))


def test_deygout_grazing_edge():
    # one sample per cell, so the 1 m wide edge is a single knife edge whose top lies on the line: v = 0
    geo = one_building_scene(height=10.0, spans=((50, 51),))
    p = extract_profile(geo, site(x=0.0, h_bs=10.0), 100.0, 10.0, step=1.0)
    assert np.count_nonzero(p.h_building) == 1
    assert deygout_loss(p, 2110, rx_height=0.0) == pytest.approx(J_AT_ZERO, abs=0.01)


def test_spm_unit_distance():
    geo = flat_geo()
    p = extract_profile(geo, site(x=0.5, h_bs=30.0), 1.5, 10.0)
    assert spm(SpmParams(), p, 2110, 1.0, 1.5) == pytest.approx(SPM_D1_H30, abs=1e-3)
    with pytest.raises(DomainError):
        spm(SpmParams(), p, 2110, 0.5, 1.5)


def test_spm_uniform_clutter_weight():
    geo = make_geo(np.zeros((20, 120)), clutter=np.full((20, 120), 2.0))
    p = extract_profile(geo, site(x=0.5, h_bs=30.0), 80.5, 10.0)
    table = (1.0, 2.0, 7.5, 3.0)
    zero = spm(SpmParams(), p, 2110, p.d, 1.5)
    assert spm(SpmParams(clutter_losses=table), p, 2110, p.d, 1.5) - zero == pytest.approx(7.5)


def test_spm_k4_zero_ignores_obstruction():
    s0 = site(x=0.0, h_bs=10.0)
    p_clear = extract_profile(one_building_scene(height=0.0), s0, 100.0, 10.0)
    p_block = extract_profile(one_building_scene(height=40.0), s0, 100.0, 10.0)
    k = SpmParams(K4=0.0)
    assert spm(k, p_clear, 2110, 100.0, 1.5) == spm(k, p_block, 2110, 100.0, 1.5)


def test_itu452_identities():
    assert itu452_interpolation(0.3) == 0.5
    # L_b + (L_c - L_d) * 0.5 == L_a == 120
    base = itu452(Itu452Inputs(L_a=120, L_b=110, L_c=30, L_d=10, theta=0.3))
    assert base == pytest.approx(120 - 5 * math.log10(2), abs=1e-4)
    assert base == pytest.approx(120 - 1.5051, abs=1e-4)
    shifted = itu452(Itu452Inputs(L_a=120, L_b=110, L_c=30, L_d=10, theta=0.3, A_bs=2.5, A_ue=1.0))
    assert shifted - base == pytest.approx(3.5, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(50, 250), st.floats(50, 250), st.floats(0, 50), st.floats(0, 50), st.floats(0, 2),
       st.floats(0, 20), st.floats(0, 20))
def test_itu452_soft_min(la, lb, lc, ld, theta, abs_, aue):
    out = itu452(Itu452Inputs(la, lb, lc, ld, theta, abs_, aue))
    branch = lb + (lc - ld) * itu452_interpolation(theta)
    lo, hi = min(la, branch), max(la, branch)
    assert lo - 5 * math.log10(2) - 1e-9 <= out - abs_ - aue <= hi + 1e-9


def test_predict_is_tx_minus_pathloss():
    geo = flat_geo()
    s0 = site(h_bs=30.0)
    cfg = EmpiricalConfig(itu452={"L_a": 100.0, "L_b": 100.0, "L_c": 0.0, "L_d": 0.0, "theta": 1.0})
    # two equal branches combine to L - 5 log10(2)
    (rss,) = empirical_predict("itu452", geo, [s0], [(50.0, 10.0, "c1")], cfg)
    assert rss == pytest.approx(43.0 - (100.0 - 5 * math.log10(2)))


def test_predict_batch_matches_single_calls():
    geo = flat_geo(nrows=20, ncols=400)
    s0 = site(h_bs=25.0)
    pts = [(x, 10.0, "c1") for x in np.linspace(5, 395, 100)]
    batch = empirical_predict("cost-hata", geo, [s0], pts)
    assert batch == [empirical_predict("cost-hata", geo, [s0], [p])[0] for p in pts]
    assert empirical_predict("cost-hata", geo, [s0], pts + pts) == batch + batch


def test_predict_errors():
    geo = flat_geo()
    with pytest.raises(ConfigError):
        empirical_predict("itu452", geo, [site()], [(50.0, 10.0, "c1")])
    with pytest.raises(ConfigError):
        empirical_predict("okumura", geo, [site()], [(50.0, 10.0, "c1")])
    with pytest.raises(UnknownReferenceError):
        empirical_predict("sui", geo, [site()], [(50.0, 10.0, "zz")])
    with pytest.raises(ConfigError):
        empirical_predict("spm", geo, [site()], [(50.0, 10.0, "c1")],
                          EmpiricalConfig(spm=SpmParams(clutter_losses=(1.0, 2.0))))


def test_load_params(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text(
        "# calibrated\nsui.intercept = 73.66\ncost_hata.area = suburban\n"
        "spm.clutter_losses = 0, 1, 2, 3\nitu452.L_a = 120\nh_ue = 1.8\n"
    )
    cfg = load_params(path)
    assert cfg.sui.intercept == 73.66 and cfg.cost_hata.area == "suburban"
    assert cfg.spm.clutter_losses == (0, 1, 2, 3) and cfg.itu452 == {"L_a": 120.0} and cfg.h_ue == 1.8
    path.write_text("spm.K99 = 1\n")
    with pytest.raises(ConfigError):
        load_params(path)
    path.write_text("hata.A1 = 1\n")
    with pytest.raises(ConfigError):
        load_params(path)
