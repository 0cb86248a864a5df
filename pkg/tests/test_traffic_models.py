import math

import numpy as np
import pytest

from trajstd.errors import CalibrationError, ConfigurationError, FitError, PreconditionError, SimulationError
from trajstd.schema import CanonicalScene
from trajstd.synthetic import idm_pair, leader_profile, pair_scene, synthetic_metadata, track_from_arrays
from trajstd.traffic_models import (CfPair, IdmParams, LaneMap, MobilParams, SpaceTimeRegion,
                                    calibrate_idm, calibrate_newell, edie_aggregate,
                                    evaluate_mobil, fd_points, fd_speed, fit_fd,
                                    idm_acceleration, mobil_decide, simulate_idm)
from trajstd.traffic_models.idm import IDM_BOUNDS, check_bounds, identifiability
from trajstd.traffic_models.mobil import _Agent, lane_change_incentive
from trajstd.traffic_models.pairs import pair_from_scene

FD_CASES = {"greenshields": ({"vf": 30.0, "kj": 0.12}, (0.01, 0.11)),
            "greenberg": ({"vm": 12.0, "kj": 0.12}, (0.01, 0.11)),
            "underwood": ({"vf": 30.0, "k0": 0.05}, (0.005, 0.10))}


def straight_track(tid, x0, v, n, rate=10.0, y=0.0, first=0):
    t = np.arange(n) / rate
    z = np.zeros(n)
    return track_from_arrays(tid, np.arange(first, first + n), rate, x0 + v * t, z + y, z + v, z, z, z)


# -- Edie -------------------------------------------------------------------

def test_edie_single_vehicle():
    tr = straight_track("1", -50.0, 10.0, 301)
    scene = CanonicalScene(synthetic_metadata("e", 10.0), (tr,))
    st = edie_aggregate(scene, SpaceTimeRegion(0.0, 100.0, 5.0, 15.0))
    assert st.q == pytest.approx(0.1, abs=1e-12)
    assert st.k == pytest.approx(0.01, abs=1e-12)
    assert st.v == pytest.approx(10.0, abs=1e-9)


def test_edie_linear_in_vehicles():
    a = straight_track("1", -50.0, 10.0, 301)
    b = straight_track("2", -50.0, 10.0, 301, y=3.5)
    region = SpaceTimeRegion(0.0, 100.0, 5.0, 15.0)
    one = edie_aggregate(CanonicalScene(synthetic_metadata("e", 10.0), (a,)), region)
    two = edie_aggregate(CanonicalScene(synthetic_metadata("e", 10.0), (a, b)), region)
    assert two.q == pytest.approx(2 * one.q) and two.k == pytest.approx(2 * one.k)
    assert two.v == pytest.approx(one.v)


def test_edie_empty():
    st = edie_aggregate(CanonicalScene(synthetic_metadata("e", 10.0), ()),
                        SpaceTimeRegion(0.0, 100.0, 0.0, 10.0))
    assert st.empty and st.q == 0.0 and st.k == 0.0 and st.v is None


def test_edie_additive_over_time():
    rng = np.random.default_rng(4)
    tracks = []
    for i in range(6):
        n = 200
        x = rng.uniform(-80, 20) + np.cumsum(np.r_[0, rng.uniform(0.5, 2.0, n - 1)])
        z = np.zeros(n)
        tracks.append(track_from_arrays(str(i + 1), np.arange(n), 10.0, x, z, z + 1, z, z, z))
    scene = CanonicalScene(synthetic_metadata("e", 10.0), tuple(tracks))
    whole = edie_aggregate(scene, SpaceTimeRegion(0.0, 100.0, 2.0, 17.0))
    parts = [edie_aggregate(scene, SpaceTimeRegion(0.0, 100.0, a, b))
             for a, b in ((2.0, 5.5), (5.5, 11.23), (11.23, 17.0))]
    area = lambda a, b: 100.0 * (b - a)  # noqa: E731
    bounds = ((2.0, 5.5), (5.5, 11.23), (11.23, 17.0))
    assert sum(p.q * area(*b) for p, b in zip(parts, bounds)) == pytest.approx(whole.q * area(2.0, 17.0))
    assert sum(p.k * area(*b) for p, b in zip(parts, bounds)) == pytest.approx(whole.k * area(2.0, 17.0))


def test_region_validation():
    with pytest.raises(ConfigurationError):
        SpaceTimeRegion(10.0, 0.0, 0.0, 1.0)
    with pytest.raises(ConfigurationError):
        SpaceTimeRegion(0.0, 10.0, 1.0, 1.0)


# -- fundamental diagram ---------------------------------------------------

@pytest.mark.parametrize("model", list(FD_CASES))
def test_fd_exact_recovery(model):
    params, (lo, hi) = FD_CASES[model]
    k = np.linspace(lo, hi, 50)
    fit = fit_fd(zip(k, fd_speed(model, params, k)), model)
    for name, value in params.items():
        assert abs(fit.params[name] / value - 1) <= 1e-9
    assert fit.rmse < 1e-9


@pytest.mark.parametrize("model", list(FD_CASES))
def test_fd_noisy_recovery(model):
    params, (lo, hi) = FD_CASES[model]
    for seed in range(20):
        rng = np.random.default_rng(seed)
        k = rng.uniform(lo, hi, 200)
        v = fd_speed(model, params, k) + rng.normal(0.0, 0.5, 200)
        fit = fit_fd(zip(k, v), model)
        for name, value in params.items():
            assert abs(fit.params[name] / value - 1) <= 0.05


def test_fd_errors():
    with pytest.raises(FitError):
        fit_fd([(0.05, 10.0), (0.05, 11.0)], "greenshields")
    with pytest.raises(FitError):
        fit_fd([(0.05, 10.0)] * 5, "greenshields")
    with pytest.raises(FitError):
        fit_fd([(0.0, 10.0), (0.1, 2.0), (0.2, 1.0)], "greenberg")
    with pytest.raises(FitError) as exc:
        # speeds rising with density give a negative jam density
        fit_fd([(0.01, 5.0), (0.05, 10.0), (0.1, 20.0)], "greenshields")
    assert "kj" in str(exc.value)
    with pytest.raises(FitError):
        fit_fd([(0.01, 5.0), (0.05, 10.0), (0.1, 20.0)], "drake")


def test_fd_points_from_scene():
    tracks = [straight_track(str(i + 1), -20.0 * i, 15.0, 200, y=3.5 * (i % 3)) for i in range(5)]
    scene = CanonicalScene(synthetic_metadata("f", 10.0), tuple(tracks))
    pts = fd_points(scene, [SpaceTimeRegion(0.0, 50.0, t, t + 5.0) for t in range(0, 20, 5)])
    assert pts and all(v == pytest.approx(15.0) for _, v in pts)


# -- IDM ---------------------------------------------------------------------

def test_idm_jam_equilibrium():
    p = IdmParams()
    assert idm_acceleration(0.0, 0.0, p.s0_jam, p) == 0.0


def test_idm_free_flow_limit():
    p = IdmParams()
    assert idm_acceleration(p.v0, 0.0, math.inf, p) == 0.0
    a = [idm_acceleration(p.v0, 0.0, s, p) for s in (1e2, 1e3, 1e4)]
    assert all(x < 0 for x in a) and a[0] < a[1] < a[2]


def test_idm_step_response_converges():
    p = IdmParams()
    n = 3001
    xl = np.full(n, 100.0)
    run = simulate_idm(xl, np.zeros(n), 50.0, 0.0, p, 0.1)
    gap = xl[-1] - run.x[-1] - 4.5
    assert not run.collided
    assert np.all(xl - run.x - 4.5 > 0)
    assert gap == pytest.approx(p.s0_jam, abs=0.05)
    # fine-step reference
    m = 300001
    fine = simulate_idm(np.full(m, 100.0), np.zeros(m), 50.0, 0.0, p, 0.001)
    assert abs(fine.x[-1] - run.x[-1]) < 0.05


def test_idm_initial_overlap():
    with pytest.raises(SimulationError):
        simulate_idm([5.0, 5.0], [0.0, 0.0], 2.0, 0.0, IdmParams(), 0.1)


def test_idm_bounds():
    with pytest.raises(ConfigurationError):
        IdmParams(v0=60.0)
    with pytest.raises(ConfigurationError):
        IdmParams(delta=3.0)
    with pytest.raises(ConfigurationError):
        check_bounds({"T": (0.05, 2.0)})
    lo, hi = check_bounds({"T": (0.5, 2.0)})
    assert lo[1] == 0.5 and hi[1] == 2.0


def test_idm_collision_free_random_params():
    rng = np.random.default_rng(100)
    xl, vl = leader_profile(10.0, 90.0)
    names = list(IDM_BOUNDS)
    for _ in range(100):
        p = IdmParams(**{n: float(rng.uniform(*IDM_BOUNDS[n])) for n in names})
        v0 = min(float(vl[0]), 0.9 * p.v0)
        s_eq = (p.s0_jam + v0 * p.T) / math.sqrt(1.0 - (v0 / p.v0) ** 4)
        run = simulate_idm(xl, vl, float(xl[0]) - s_eq - 4.5, v0, p, 0.1)
        assert not run.collided
        assert np.all(xl - run.x - 4.5 > 0)


def test_idm_dt_consistency():
    def final(dt):
        t = np.arange(int(round(60 / dt)) + 1) * dt
        vl = np.interp(t, [0, 20, 30, 60], [20, 20, 5, 15])
        xl = 200 + np.concatenate([[0.0], np.cumsum(0.5 * (vl[1:] + vl[:-1]) * dt)])
        return simulate_idm(xl, vl, 160.0, 20.0, IdmParams(), dt).x[-1]
    d1 = abs(final(0.1) - final(0.05))
    d2 = abs(final(0.05) - final(0.025))
    assert d2 < 0.75 * d1
    assert d1 < 1.0


@pytest.fixture(scope="module")
def idm_fit():
    pair = idm_pair()
    return pair, calibrate_idm(pair, seed=0)


def test_idm_self_calibration(idm_fit):
    pair, fit = idm_fit
    assert fit.rmse < 0.05
    assert not fit.weak_identifiability
    truth = IdmParams()
    for name in IDM_BOUNDS:
        assert abs(getattr(fit.params, name) / getattr(truth, name) - 1) <= 0.05
    assert len(fit.starts) == 8


def test_idm_constant_platoon_weak():
    n = 201
    t = np.arange(n) * 0.1
    xl = 100 + 20 * t
    p = IdmParams()
    s_eq = (p.s0_jam + 20 * p.T) / math.sqrt(1 - (20 / p.v0) ** 4)
    pair = CfPair(xl, np.full(n, 20.0), xl - s_eq - 4.5, np.full(n, 20.0), 0.1)
    a = calibrate_idm(pair, seed=3, maxiter=300)
    b = calibrate_idm(pair, seed=3, maxiter=300)
    assert a.weak_identifiability and a.weak_directions
    assert a == b
    assert identifiability(pair, p)[0]


def test_idm_short_pair_rejected():
    pair = idm_pair(duration=5.0)
    with pytest.raises(CalibrationError):
        calibrate_idm(pair)


def test_pair_from_scene_round_trip():
    pair = idm_pair(duration=20.0)
    back = pair_from_scene(pair_scene(pair), "1", "2")
    np.testing.assert_allclose(back.spacing, pair.spacing, atol=1e-9)
    np.testing.assert_allclose(back.follower_v, pair.follower_v, atol=1e-9)
    with pytest.raises(PreconditionError):
        pair_from_scene(pair_scene(pair), "1", "9")


# -- Newell -------------------------------------------------------------------

def test_newell_exact():
    # follower at frame k sits 7 m behind where the leader was 12 frames earlier
    xl, _ = leader_profile(10.0, 90.0)
    lag = 12
    xf = np.r_[xl[:lag] - 1e3, xl[:-lag] - 7.0]
    fit = calibrate_newell(xl[lag:], xf[lag:], 0.1)
    assert fit.lag_frames == lag
    assert fit.params.tau == pytest.approx(1.2)
    assert fit.params.d == pytest.approx(7.0, abs=1e-9)
    assert fit.rmse < 1e-9


def test_newell_zero_lag():
    xl, _ = leader_profile(10.0, 30.0)
    fit = calibrate_newell(xl, xl - 9.0, 0.1)
    assert fit.lag_frames == 0 and fit.params.d == pytest.approx(9.0)


def test_newell_noise():
    xl, _ = leader_profile(10.0, 90.0)
    lag, sigma = 12, 0.1
    for seed in range(10):
        rng = np.random.default_rng(seed)
        noisy = xl + rng.normal(0.0, sigma, len(xl))
        xf = np.r_[xl[:lag] - 1e3, xl[:-lag] - 7.0]
        fit = calibrate_newell(noisy[lag:], xf[lag:], 0.1)
        assert fit.lag_frames == lag
        assert abs(fit.params.d - 7.0) <= 3 * sigma / math.sqrt(fit.n_points)


# -- MOBIL --------------------------------------------------------------------

def test_mobil_slow_leader_changes():
    cf = IdmParams()
    ego = _Agent(0.0, 25.0, 4.5)
    lead = _Agent(30.0, 10.0, 4.5)
    ok, gain = lane_change_incentive(ego, [ego, lead], [], cf, MobilParams(p=0.0))
    # hand values: a_c from the IDM with s = 25.5, dv = 15; a_c_new = free road
    s_star = 2.0 + 25 * 1.5 + 25 * 15 / (2 * math.sqrt(3.0))
    a_c = 1.5 * (1 - (25 / 30) ** 4 - (s_star / 25.5) ** 2)
    a_new = 1.5 * (1 - (25 / 30) ** 4)
    assert ok
    assert gain == pytest.approx(a_new - a_c)


def test_mobil_safety_gate():
    mp = MobilParams()
    assert not mobil_decide(-5.0, 1.0, 0.0, 0.0, 0.0, -mp.b_safe - 0.01, mp)
    assert mobil_decide(-5.0, 1.0, 0.0, 0.0, 0.0, -mp.b_safe + 0.01, mp)


def test_mobil_symmetric_no_change():
    cf = IdmParams()
    ego = _Agent(0.0, 20.0, 4.5)
    ok, gain = lane_change_incentive(ego, [ego], [], cf, MobilParams())
    assert not ok and gain == pytest.approx(0.0)


def test_mobil_params_bounds():
    with pytest.raises(ConfigurationError):
        MobilParams(p=1.5)


def _lane_change_scene():
    rate, n = 10.0, 100
    t = np.arange(n) / rate
    z = np.zeros(n)
    lead = track_from_arrays("1", np.arange(n), rate, 60 + 10 * t, z, z + 10, z, z, z)
    y = np.where(t < 1.0, 0.0, 3.5)
    ego = track_from_arrays("2", np.arange(n), rate, 25 * t, y, z + 25, z, z, z)
    return CanonicalScene(synthetic_metadata("lc", rate), (lead, ego))


LANES = {"origin": [0.0, -1.75], "axis": [1.0, 0.0],
         "lanes": [{"id": 1, "lateral_min": 0.0, "lateral_max": 3.5},
                   {"id": 2, "lateral_min": 3.5, "lateral_max": 7.0}]}


def test_mobil_evaluation_recalls_change():
    res = evaluate_mobil(_lane_change_scene(), LaneMap.from_dict(LANES), IdmParams(), MobilParams())
    assert res.observed == (("2", 10),)
    assert res.recall == 1.0 and res.true_positive >= 1
    assert any(d.track_id == "2" and d.from_lane == 1 and d.to_lane == 2 for d in res.decisions)


def test_mobil_needs_lanes():
    with pytest.raises(PreconditionError):
        evaluate_mobil(_lane_change_scene(), None, IdmParams(), MobilParams())
    far = {**LANES, "origin": [0.0, 500.0]}
    with pytest.raises(PreconditionError):
        evaluate_mobil(_lane_change_scene(), LaneMap.from_dict(far), IdmParams(), MobilParams())


def test_lane_map_validation():
    with pytest.raises(ConfigurationError):
        LaneMap.from_dict({"lanes": [{"id": 1, "lateral_min": 0, "lateral_max": 4},
                                     {"id": 2, "lateral_min": 3, "lateral_max": 7}]})
    with pytest.raises(ConfigurationError):
        LaneMap.from_dict({"lanes": [{"id": 1}]})
    lm = LaneMap.from_dict(LANES)
    assert LaneMap.from_dict(lm.to_dict()) == lm
    np.testing.assert_array_equal(lm.assign([0, 0, 0], [0.0, 3.0, 20.0]), [0, 1, -1])
