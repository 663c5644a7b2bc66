import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from istnsim.scenario import (
    TimeGrid,
    OrbitState,
    Route,
    scenario_from_dict,
    route_position,
    propagate_orbit,
    elevation_azimuth,
    fov_mask,
    draw_background_load,
)


def tiny_cfg(**over):
    cfg = {
        "name": "tiny",
        "grid": {"n_ts": 6, "ts_duration": 0.5, "qos_period": 3,
                 "pred_window": 2},
        "radio": {
            "fc_hz": 3.4e9, "bandwidth_hz": 20e6,
            "noise_figure_db": 1.2, "antenna_temp_k": 150.0,
            "rho": 0.7, "rate_min_bps_hz": 0.3,
            "fov_min_elevation_deg": 60.0,
            "bs": {"power_dbm": 42.0, "capacity": 3, "background_mean": 1.0},
            "sat": {"power_dbw": 14.0, "capacity": 10, "background_mean": 6.0},
            "ue": {"peak_gain_dbi": 12.8, "height_m": 1.5},
        },
        "bs": [{"pos": [60.0, 0.0, 25.0], "bearing_deg": 270.0}],
        "sats": [{"altitude_m": 500e3, "inclination_deg": 53.0,
                  "phase_deg": 0.0}],
        "ues": [{"route": {"waypoints": [[0, 0, 0], [30, 0, 0]],
                           "speeds": [2.0]}}],
        "scene": {"boxes": [], "ground": True},
        "seed": 1,
    }
    cfg.update(over)
    return cfg


# ---------------------------------------------------------------------
# time grid
# ---------------------------------------------------------------------

def test_qos_periods_ragged_tail():
    g = TimeGrid(n_ts=10, ts_duration=0.5, qos_period=4, pred_window=3)
    assert g.qos_periods() == [(0, 4), (4, 8), (8, 10)]
    assert g.pred_windows() == [(0, 3), (3, 6), (6, 9), (9, 10)]


def test_windows_cover_horizon_disjoint():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(1, 40))
        q = int(rng.integers(1, n + 1))
        g = TimeGrid(n_ts=n, ts_duration=1.0, qos_period=q, pred_window=q)
        for wins in (g.qos_periods(), g.pred_windows()):
            flat = [t for s, e in wins for t in range(s, e)]
            assert flat == list(range(n))


# ---------------------------------------------------------------------
# routes
# ---------------------------------------------------------------------

def test_route_from_speeds_total_length():
    r = Route.from_speeds([[0, 0, 0], [30, 0, 0], [30, 40, 0]], [2.0, 2.0])
    assert r.total_length == pytest.approx(70.0)
    assert r.times[-1] == pytest.approx(35.0)


def test_route_position_interpolates_and_clamps():
    r = Route.from_speeds([[0, 0, 1.5], [10, 0, 1.5]], [1.0])
    assert_allclose(route_position(r, 4.0), [4.0, 0.0, 1.5])
    assert_allclose(route_position(r, 25.0), [10.0, 0.0, 1.5])
    assert_allclose(route_position(r, -3.0), [0.0, 0.0, 1.5])


def test_route_rejects_speeds_and_times_together():
    with pytest.raises(ValueError):
        scenario_from_dict(tiny_cfg(ues=[{"route": {
            "waypoints": [[0, 0, 0], [1, 0, 0]],
            "speeds": [1.0], "times": [0.0, 1.0]}}]))


def test_ue_distance_and_velocity():
    sc = scenario_from_dict(tiny_cfg())
    # 2 m/s, 0.5 s slots: distance grows 1 m per slot
    assert sc.ue_distance(0, 0) == pytest.approx(0.0)
    assert sc.ue_distance(0, 4) == pytest.approx(4.0)
    v = [sc.ue_velocity(0, t) for t in range(4)]
    assert v[0] == pytest.approx(0.0)
    assert_allclose(v[1:], 2.0)


# ---------------------------------------------------------------------
# orbits
# ---------------------------------------------------------------------

def test_orbital_period_500km():
    # Kepler's third law at a 6871 km semi-major axis
    orb = OrbitState(altitude=500e3, inclination=math.radians(53.0))
    assert orb.period == pytest.approx(5668.55, abs=0.5)


def test_propagate_orbit_radius_constant():
    g = TimeGrid(n_ts=48, ts_duration=0.5, qos_period=12, pred_window=12)
    orb = OrbitState(altitude=500e3, inclination=math.radians(53.0),
                     raan=0.3, phase=0.1)
    for t in np.linspace(0.0, 48.0, 9):
        p = propagate_orbit(orb, t, g)
        assert np.linalg.norm(p) == pytest.approx(6371e3 + 500e3, rel=1e-12)


def test_zenith_satellite_elevation():
    sc = scenario_from_dict(tiny_cfg())
    # phase 0, raan 0, observer at (0, 0): overhead at epoch
    sat = sc.sat_position_enu(0, 0)
    el, _ = elevation_azimuth(np.zeros(3), sat)
    assert el == pytest.approx(math.pi / 2, abs=1e-6)
    assert sat[2] == pytest.approx(500e3, rel=1e-9)


def test_elevation_azimuth_cardinal():
    el, az = elevation_azimuth(np.zeros(3), np.array([0.0, 100.0, 100.0]))
    assert az == pytest.approx(0.0)            # due north
    assert el == pytest.approx(math.pi / 4)
    _, az_e = elevation_azimuth(np.zeros(3), np.array([50.0, 0.0, 1.0]))
    assert az_e == pytest.approx(math.pi / 2)  # due east


def test_fov_mask_threshold():
    sc = scenario_from_dict(tiny_cfg())
    m = fov_mask(sc, 0)
    assert m.shape == (1, 1)
    assert m.dtype == bool
    assert m.all()


def test_fov_mask_blocks_low_elevation():
    # a quarter orbit away: far below the elevation mask
    cfg = tiny_cfg(sats=[{"altitude_m": 500e3, "inclination_deg": 53.0,
                          "phase_deg": 90.0}])
    sc = scenario_from_dict(cfg)
    assert not fov_mask(sc, 0).any()


# ---------------------------------------------------------------------
# background load
# ---------------------------------------------------------------------

def test_background_load_clamped_below_capacity():
    g = TimeGrid(n_ts=200, ts_duration=0.5, qos_period=10, pred_window=10)
    load = draw_background_load(
        bs_means=np.array([50.0]), sat_means=np.array([50.0]),
        bs_caps=np.array([4]), sat_caps=np.array([12]), seed=0, grid=g)
    assert load.bs_load.max() <= 3
    assert load.sat_load.max() <= 11
    assert load.bs_load.min() >= 0


def test_background_load_deterministic_in_seed():
    g = TimeGrid(n_ts=16, ts_duration=0.5, qos_period=4, pred_window=4)
    kw = dict(bs_means=np.array([2.0, 1.0]), sat_means=np.array([6.0]),
              bs_caps=np.array([6, 6]), sat_caps=np.array([20]), grid=g)
    a = draw_background_load(seed=5, **kw)
    b = draw_background_load(seed=5, **kw)
    c = draw_background_load(seed=6, **kw)
    assert np.array_equal(a.bs_load, b.bs_load)
    assert np.array_equal(a.sat_load, b.sat_load)
    assert not (np.array_equal(a.bs_load, c.bs_load)
                and np.array_equal(a.sat_load, c.sat_load))


def test_scenario_draw_load_uses_own_seed():
    sc = scenario_from_dict(tiny_cfg())
    a, b = sc.draw_load(), sc.draw_load()
    assert np.array_equal(a.bs_load, b.bs_load)
    assert np.array_equal(a.sat_load, b.sat_load)


# ---------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------

def test_scenario_from_dict_units():
    sc = scenario_from_dict(tiny_cfg())
    assert sc.radio.bs_budget_w[0] == pytest.approx(10 ** (42.0 / 10) * 1e-3)
    assert sc.radio.sat_budget_w[0] == pytest.approx(10 ** (14.0 / 10))
    assert sc.min_elevation == pytest.approx(math.radians(60.0))
    assert sc.antennas.bs_bearings[0] == pytest.approx(math.radians(270.0))
    assert sc.routes[0].waypoints[0, 2] == pytest.approx(1.5)  # ue height


def test_scenario_from_dict_missing_key():
    cfg = tiny_cfg()
    del cfg["grid"]
    with pytest.raises(KeyError):
        scenario_from_dict(cfg)


def test_scenario_counts_must_match():
    from dataclasses import replace
    sc = scenario_from_dict(tiny_cfg())
    with pytest.raises(ValueError):
        replace(sc, orbits=[])
