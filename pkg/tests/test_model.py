import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from istnsim.channel import ChannelTensor
from istnsim.model import (
    RadioParams,
    AssociationSolution,
    background_power_bs,
    background_power_sat,
    background_power_bs_all,
    background_power_sat_all,
    sat_interference,
    bs_interference,
    sinr_bs,
    sinr_sat,
    rate_matrix,
    rate_matrix_split,
    rate,
    cc_count,
    objective,
    objective_components,
    check_feasibility,
)
from istnsim.scenario import BackgroundLoad, scenario_from_dict

LN2 = math.log(2.0)


def params_2x1x2(**over):
    """Two BSs, one satellite, two UEs; unit noise for hand arithmetic."""
    kw = dict(
        bs_budget_w=np.array([8.0, 8.0]),
        sat_budget_w=np.array([10.0]),
        noise_w=np.array([1.0, 1.0]),
        psi_bs=np.array([4, 4]),
        psi_sat=np.array([6]),
        rate_min_bps=np.array([0.1, 0.1]),
        rho=0.7,
        ue_count=2,
    )
    kw.update(over)
    return RadioParams(**kw)


def params_1x1(**over):
    """Single BS, single satellite, single UE."""
    kw = dict(
        bs_budget_w=np.array([8.0]),
        sat_budget_w=np.array([10.0]),
        noise_w=np.array([1.0]),
        psi_bs=np.array([4]),
        psi_sat=np.array([6]),
        rate_min_bps=np.array([0.1]),
        rho=0.7,
        ue_count=1,
    )
    kw.update(over)
    return RadioParams(**kw)


def empty_solution(n, m, k, t):
    return AssociationSolution(
        alpha=np.zeros((n, k, t)), beta=np.zeros((m, k, t)),
        p_bs=np.zeros((n, k, t)), p_sat=np.zeros((m, k, t)))


def flat_channel(n, m, k, t, h=1.0, g=1.0):
    return ChannelTensor(h=np.full((n, k, t), h), g=np.full((m, k, t), g))


# ---------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------

def test_rho_must_be_a_weight():
    with pytest.raises(ValueError):
        params_2x1x2(rho=1.5)


def test_rate_min_nats_conversion():
    p = params_2x1x2(rate_min_bps=np.array([0.5, 2.0]))
    assert_allclose(p.rate_min_nats, [0.5 * LN2, 2.0 * LN2])


def test_solution_dims():
    sol = empty_solution(3, 2, 4, 5)
    assert sol.dims == (3, 2, 4, 5)


# ---------------------------------------------------------------------
# background power split
# ---------------------------------------------------------------------

def test_background_power_uniform_split():
    p = params_2x1x2()
    load = BackgroundLoad(bs_load=np.array([[1], [3]]),
                          sat_load=np.array([[2]]))
    # divisor is min(psi, eta + K): 1+2=3 < psi=4, 3+2=5 capped at 4
    assert background_power_bs(0, 0, load, p) == pytest.approx(8.0 / 3.0)
    assert background_power_bs(1, 0, load, p) == pytest.approx(8.0 / 4.0)
    assert background_power_sat(0, 0, load, p) == pytest.approx(10.0 / 4.0)


def test_background_power_all_matches_scalar():
    rng = np.random.default_rng(3)
    p = params_2x1x2()
    for _ in range(20):
        load = BackgroundLoad(bs_load=rng.integers(0, 4, size=(2, 3)),
                              sat_load=rng.integers(0, 6, size=(1, 3)))
        pb = background_power_bs_all(load, p)
        ps = background_power_sat_all(load, p)
        for t in range(3):
            for n in range(2):
                assert pb[n, t] == background_power_bs(n, t, load, p)
            assert ps[0, t] == background_power_sat(0, t, load, p)


# ---------------------------------------------------------------------
# interference fields
# ---------------------------------------------------------------------

def test_interference_background_only():
    p = params_2x1x2()
    ch = flat_channel(2, 1, 2, 1, h=0.5, g=0.25)
    load = BackgroundLoad(bs_load=np.array([[2], [0]]),
                          sat_load=np.array([[2]]))
    # BS field: eta_0 * (8/4) * 0.5 from BS 0, nothing from idle BS 1
    assert_allclose(bs_interference(None, ch, load, p), [[2.0], [2.0]])
    # sat field: 2 users * (10/4) * 0.25
    assert_allclose(sat_interference(None, ch, load, p), [[1.25], [1.25]])


def test_interference_adds_scheduled_power():
    p = params_2x1x2()
    ch = flat_channel(2, 1, 2, 1, h=0.5, g=0.25)
    load = BackgroundLoad(bs_load=np.zeros((2, 1), int),
                          sat_load=np.zeros((1, 1), int))
    sol = empty_solution(2, 1, 2, 1)
    sol.beta[0, 0, 0] = 1
    sol.p_sat[0, 0, 0] = 4.0
    sol.alpha[1, 1, 0] = 1
    sol.p_bs[1, 1, 0] = 2.0
    assert_allclose(sat_interference(sol, ch, load, p), [[1.0], [1.0]])
    assert_allclose(bs_interference(sol, ch, load, p), [[1.0], [1.0]])


def test_own_system_power_is_orthogonal():
    # another user on the same BS never enters a BS-link denominator
    p = params_2x1x2()
    ch = flat_channel(2, 1, 2, 1)
    load = BackgroundLoad(bs_load=np.zeros((2, 1), int),
                          sat_load=np.zeros((1, 1), int))
    sol = empty_solution(2, 1, 2, 1)
    sol.alpha[0, 0, 0] = 1
    sol.p_bs[0, 0, 0] = 3.0
    sol.alpha[0, 1, 0] = 1
    sol.p_bs[0, 1, 0] = 1.0
    before = sinr_bs(0, 0, 0, sol, ch, load, p)
    sol.p_bs[0, 1, 0] = 5.0
    assert sinr_bs(0, 0, 0, sol, ch, load, p) == before
    # but it does raise the interference seen on satellite links
    sol.beta[0, 0, 0] = 1
    sol.p_sat[0, 0, 0] = 2.0
    low = sinr_sat(0, 0, 0, sol, ch, load, p)
    sol.p_bs[0, 1, 0] = 50.0
    assert sinr_sat(0, 0, 0, sol, ch, load, p) < low


def test_sinr_hand_value():
    p = params_2x1x2()
    ch = flat_channel(2, 1, 2, 1, h=0.5, g=0.25)
    load = BackgroundLoad(bs_load=np.zeros((2, 1), int),
                          sat_load=np.zeros((1, 1), int))
    sol = empty_solution(2, 1, 2, 1)
    sol.alpha[0, 0, 0] = 1
    sol.p_bs[0, 0, 0] = 6.0
    sol.beta[0, 1, 0] = 1
    sol.p_sat[0, 1, 0] = 4.0
    # UE0 BS link: 6*0.5 over sat field 4*0.25 + noise 1
    assert sinr_bs(0, 0, 0, sol, ch, load, p) == pytest.approx(3.0 / 2.0)
    # UE1 sat link: 4*0.25 over BS field 6*0.5 + noise 1
    assert sinr_sat(0, 1, 0, sol, ch, load, p) == pytest.approx(1.0 / 4.0)
    assert sinr_bs(1, 0, 0, sol, ch, load, p) == 0.0


# ---------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------

def test_rate_matrix_matches_sinr():
    p = params_2x1x2()
    ch = flat_channel(2, 1, 2, 1, h=0.5, g=0.25)
    load = BackgroundLoad(bs_load=np.zeros((2, 1), int),
                          sat_load=np.zeros((1, 1), int))
    sol = empty_solution(2, 1, 2, 1)
    sol.alpha[0, 0, 0] = 1
    sol.p_bs[0, 0, 0] = 6.0
    sol.beta[0, 1, 0] = 1
    sol.p_sat[0, 1, 0] = 4.0
    r = rate_matrix(sol, ch, load, p)
    assert_allclose(r[0, 0], math.log(2.5))
    assert_allclose(r[1, 0], math.log(1.25))
    assert rate(0, 0, sol, ch, load, p) == r[0, 0]
    assert_allclose(rate(0, 0, sol, ch, load, p, unit="bits"),
                    math.log2(2.5))


def test_rate_split_adds_up():
    rng = np.random.default_rng(11)
    p = params_2x1x2()
    load = BackgroundLoad(bs_load=rng.integers(0, 3, (2, 4)),
                          sat_load=rng.integers(0, 5, (1, 4)))
    ch = ChannelTensor(h=rng.uniform(0.01, 1.0, (2, 2, 4)),
                       g=rng.uniform(0.01, 1.0, (1, 2, 4)))
    sol = empty_solution(2, 1, 2, 4)
    sol.alpha[rng.integers(0, 2), 0, :] = 1
    sol.beta[0, 1, :] = 1
    sol.p_bs[:] = sol.alpha * rng.uniform(0.1, 2.0, sol.p_bs.shape)
    sol.p_sat[:] = sol.beta * rng.uniform(0.1, 2.0, sol.p_sat.shape)
    r_b, r_s = rate_matrix_split(sol, ch, load, p)
    assert_allclose(rate_matrix(sol, ch, load, p), r_b + r_s)
    rb_bits, rs_bits = rate_matrix_split(sol, ch, load, p, unit="bits")
    assert_allclose(rb_bits * LN2, r_b)
    assert_allclose(rs_bits * LN2, r_s)
    assert (r_b >= 0).all() and (r_s >= 0).all()


def test_rate_dual_link_sums_both_systems():
    # one UE holding a BS link and a satellite link adds the two rates
    p = params_1x1()
    ch = flat_channel(1, 1, 1, 1)
    load = BackgroundLoad(bs_load=np.zeros((1, 1), int),
                          sat_load=np.zeros((1, 1), int))
    sol = empty_solution(1, 1, 1, 1)
    sol.alpha[0, 0, 0] = 1
    sol.p_bs[0, 0, 0] = 3.0
    sol.beta[0, 0, 0] = 1
    sol.p_sat[0, 0, 0] = 7.0
    # each link is interfered by the other system's full power
    want = math.log1p(3.0 / 8.0) + math.log1p(7.0 / 4.0)
    assert_allclose(rate_matrix(sol, ch, load, p)[0, 0], want)


def test_more_power_hurts_other_system_only():
    rng = np.random.default_rng(5)
    p = params_2x1x2()
    ch = ChannelTensor(h=rng.uniform(0.1, 1.0, (2, 2, 1)),
                       g=rng.uniform(0.1, 1.0, (1, 2, 1)))
    load = BackgroundLoad(bs_load=np.ones((2, 1), int),
                          sat_load=np.ones((1, 1), int))
    sol = empty_solution(2, 1, 2, 1)
    sol.alpha[0, 0, 0] = 1
    sol.p_bs[0, 0, 0] = 1.0
    sol.beta[0, 1, 0] = 1
    sol.p_sat[0, 1, 0] = 1.0
    r0 = rate_matrix(sol, ch, load, p)
    sol.p_bs[0, 0, 0] = 2.0
    r1 = rate_matrix(sol, ch, load, p)
    assert r1[0, 0] > r0[0, 0]          # own link improves
    assert r1[1, 0] < r0[1, 0]          # cross-system link degrades


# ---------------------------------------------------------------------
# connection changes and objective
# ---------------------------------------------------------------------

def test_cc_count_hand_case():
    sol = empty_solution(1, 1, 1, 4)
    sol.alpha[0, 0, :] = [1, 0, 0, 1]   # two flips
    sol.beta[0, 0, :] = [0, 1, 1, 1]    # one flip
    assert cc_count(sol) == 3


def test_cc_count_constant_assignment_is_zero():
    rng = np.random.default_rng(2)
    for _ in range(10):
        col_a = rng.integers(0, 2, (3, 2, 1))
        col_b = rng.integers(0, 2, (2, 2, 1))
        sol = AssociationSolution(
            alpha=np.repeat(col_a, 5, axis=2),
            beta=np.repeat(col_b, 5, axis=2),
            p_bs=np.zeros((3, 2, 5)), p_sat=np.zeros((2, 2, 5)))
        assert cc_count(sol) == 0


def test_cc_count_time_reversal_invariant():
    rng = np.random.default_rng(9)
    for _ in range(10):
        a = rng.integers(0, 2, (2, 3, 6))
        b = rng.integers(0, 2, (2, 3, 6))
        sol = AssociationSolution(alpha=a, beta=b,
                                  p_bs=np.zeros(a.shape),
                                  p_sat=np.zeros(b.shape))
        rev = AssociationSolution(alpha=a[:, :, ::-1], beta=b[:, :, ::-1],
                                  p_bs=np.zeros(a.shape),
                                  p_sat=np.zeros(b.shape))
        assert cc_count(sol) == cc_count(rev)


def test_objective_weighs_rate_against_changes():
    p = params_1x1(rho=0.6)
    ch = flat_channel(1, 1, 1, 2)
    load = BackgroundLoad(bs_load=np.zeros((1, 2), int),
                          sat_load=np.zeros((1, 2), int))
    sol = empty_solution(1, 1, 1, 2)
    sol.alpha[0, 0, :] = [1, 0]
    sol.beta[0, 0, :] = [0, 1]
    sol.p_bs[0, 0, 0] = 3.0
    sol.p_sat[0, 0, 1] = 3.0
    sr, cc = objective_components(sol, ch, load, p)
    assert_allclose(sr, 2 * math.log(4.0) / 2)
    assert cc == 1.0                     # two flips over two slots
    assert_allclose(objective(sol, ch, load, p), 0.6 * sr - 0.4 * cc)


# ---------------------------------------------------------------------
# feasibility checker
# ---------------------------------------------------------------------

def check_cfg(**grid_over):
    grid = {"n_ts": 2, "ts_duration": 0.5, "qos_period": 2, "pred_window": 1}
    grid.update(grid_over)
    return scenario_from_dict({
        "name": "check",
        "grid": grid,
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
    })


def serving_case(t=2):
    """One UE on one BS with a healthy margin on every constraint."""
    p = params_2x1x2(ue_count=1, noise_w=np.array([1.0]),
                     rate_min_bps=np.array([0.3]))
    ch = flat_channel(2, 1, 1, t)
    load = BackgroundLoad(bs_load=np.zeros((2, t), int),
                          sat_load=np.zeros((1, t), int))
    sol = empty_solution(2, 1, 1, t)
    sol.alpha[0, 0, :] = 1
    sol.p_bs[0, 0, :] = 3.0
    return p, ch, load, sol


def test_feasibility_clean_solution_passes():
    sc = check_cfg()
    p, ch, load, sol = serving_case()
    rep = check_feasibility(sol, sc, ch, load, p)
    assert rep.feasible
    assert set(rep.entries) == {"C0", "C1", "C2", "C3", "C4",
                                "C5", "C6", "C7", "C8"}
    assert "ok" in rep.summary()


@pytest.mark.parametrize("breaker,name,worst", [
    # fractional alpha also leaves 3 W on a half-idle link: worst is 1.5
    (lambda s: s.alpha.__setitem__((0, 0, 0), 0.5), "C0", 1.5),
    (lambda s: s.p_bs.__setitem__((1, 0, 0), 1.0), "C0", 1.0),
    (lambda s: s.p_sat.__setitem__((0, 0, 0), -0.5), "C0", 0.5),
    (lambda s: s.alpha.__setitem__((1, 0, 0), 1), "C1", 1.0),
    (lambda s: s.beta.__setitem__((0, 0, slice(None)), 2), "C3", 1.0),
])
def test_feasibility_flags_domain_and_uniqueness(breaker, name, worst):
    sc = check_cfg()
    p, ch, load, sol = serving_case()
    breaker(sol)
    rep = check_feasibility(sol, sc, ch, load, p, check_qos=False)
    ok, viol = rep.entries[name]
    assert not ok
    assert viol == pytest.approx(worst)
    assert not rep.feasible


def test_feasibility_fov_gate():
    sc = check_cfg()
    p, ch, load, sol = serving_case()
    ch.g[0, 0, 1] = 0.0
    ch.fov[0, 0, 1] = False
    sol.beta[0, 0, 1] = 1
    rep = check_feasibility(sol, sc, ch, load, p, check_qos=False)
    assert not rep.entries["C0"][0]


def test_feasibility_capacity_counts_background():
    sc = check_cfg()
    p, ch, load, sol = serving_case()
    # psi_bs = 4 with background 3 leaves one free slot: two users overflow
    load.bs_load[0, :] = 3
    rep = check_feasibility(sol, sc, ch, load, p, check_qos=False)
    assert rep.entries["C2"][0]
    p2 = params_2x1x2(ue_count=2, noise_w=np.array([1.0, 1.0]))
    ch2 = flat_channel(2, 2, 2, 2)
    sol2 = empty_solution(2, 1, 2, 2)
    sol2.alpha[0, :, :] = 1
    load2 = BackgroundLoad(bs_load=np.full((2, 2), 3, int),
                           sat_load=np.zeros((1, 2), int))
    rep2 = check_feasibility(sol2, sc, ch2, load2, p2, check_qos=False)
    ok, viol = rep2.entries["C2"]
    assert not ok and viol == 1.0


def test_feasibility_requires_a_link_per_slot():
    sc = check_cfg()
    p, ch, load, sol = serving_case()
    sol.alpha[0, 0, 1] = 0
    sol.p_bs[0, 0, 1] = 0.0
    rep = check_feasibility(sol, sc, ch, load, p, check_qos=False)
    ok, viol = rep.entries["C5"]
    assert not ok and viol == 1.0


def test_feasibility_qos_averages_over_period():
    # slot rates 1.386 / 0 nats average to 0.693 over the 2-slot period,
    # above the 0.9 bps/Hz threshold (0.624 nats)
    sc = check_cfg()
    p, ch, load, sol = serving_case()
    sol.p_bs[0, 0, 1] = 0.0             # active link, zero power
    p = params_2x1x2(ue_count=1, noise_w=np.array([1.0]),
                     rate_min_bps=np.array([0.9]))
    rep = check_feasibility(sol, sc, ch, load, p)
    assert rep.entries["C6"][0]
    # the same solution fails once each slot is its own period
    sc1 = check_cfg(qos_period=1)
    rep1 = check_feasibility(sol, sc1, ch, load, p)
    ok, viol = rep1.entries["C6"]
    assert not ok
    assert_allclose(viol, 0.9 * LN2)


def test_feasibility_budget_includes_background_spend():
    sc = check_cfg()
    p, ch, load, sol = serving_case()
    # background 2 users at 8/3 W each leaves 8/3 W; spending 4 W breaks C7
    load.bs_load[0, :] = 2
    sol.p_bs[0, 0, :] = 4.0
    rep = check_feasibility(sol, sc, ch, load, p, check_qos=False)
    ok, viol = rep.entries["C7"]
    assert not ok
    assert_allclose(viol, 2.0 * (8.0 / 3.0) + 4.0 - 8.0)
    sol.p_bs[0, 0, :] = 8.0 / 3.0
    rep = check_feasibility(sol, sc, ch, load, p, check_qos=False)
    assert rep.entries["C7"][0]


def test_feasibility_sat_budget():
    sc = check_cfg()
    p, ch, load, sol = serving_case()
    sol.beta[0, 0, :] = 1
    sol.p_sat[0, 0, :] = 11.0
    rep = check_feasibility(sol, sc, ch, load, p, check_qos=False)
    ok, viol = rep.entries["C8"]
    assert not ok and viol == pytest.approx(1.0)


def test_feasibility_random_constructed_solutions():
    # assignments built to satisfy C0-C5, C7, C8 must pass the checker
    rng = np.random.default_rng(17)
    sc = check_cfg()
    for _ in range(25):
        n, m, k, t = 3, 2, 4, 3
        p = RadioParams(
            bs_budget_w=np.full(n, 10.0), sat_budget_w=np.full(m, 10.0),
            noise_w=np.ones(k), psi_bs=np.full(n, k + 2),
            psi_sat=np.full(m, k + 2), rate_min_bps=np.zeros(k),
            rho=0.5, ue_count=k)
        ch = ChannelTensor(h=rng.uniform(0.1, 1.0, (n, k, t)),
                           g=rng.uniform(0.1, 1.0, (m, k, t)))
        load = BackgroundLoad(bs_load=rng.integers(0, 2, (n, t)),
                              sat_load=rng.integers(0, 2, (m, t)))
        sol = empty_solution(n, m, k, t)
        for tt in range(t):
            for kk in range(k):
                if rng.random() < 0.5:
                    sol.alpha[rng.integers(0, n), kk, tt] = 1
                else:
                    sol.beta[rng.integers(0, m), kk, tt] = 1
        budget_slice = 10.0 / (k + 2)    # safe under any background draw
        sol.p_bs[:] = sol.alpha * rng.uniform(0.05, budget_slice,
                                              sol.p_bs.shape)
        sol.p_sat[:] = sol.beta * rng.uniform(0.05, budget_slice,
                                              sol.p_sat.shape)
        rep = check_feasibility(sol, sc, ch, load, p, check_qos=False)
        assert rep.feasible, rep.summary()
