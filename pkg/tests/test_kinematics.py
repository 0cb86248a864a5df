import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajstd.errors import ConfigurationError, DataError
from trajstd.kinematics import (CompletionConfig, SmoothingConfig, complete_scene,
                                derive_heading, derive_kinematics, derive_obb,
                                headings_from_positions, resample, smooth_positions)
from trajstd.schema import CanonicalScene, Track
from trajstd.synthetic import random_scene, synthetic_metadata


def make_track(x, y, rate=25.0, heading=None, length=4.0, width=2.0):
    n = len(x)
    nan = np.full(n, np.nan)
    return Track(track_id="1", agent_type="car", length=length, width=width,
                 frame=np.arange(n), t=np.arange(n) / rate, x=np.asarray(x, float),
                 y=np.asarray(y, float), heading=nan if heading is None else np.asarray(heading, float),
                 speed=nan, ax=nan, ay=nan, obb=np.full((n, 4, 2), np.nan))


def test_linear_track_fixed_point():
    t = np.arange(50) / 25.0
    tr = make_track(3 + 10 * t, -2 + 4 * t)
    for method in ("centered_moving_average", "savitzky_golay_order2"):
        out = smooth_positions(tr, SmoothingConfig(method=method)).track
        np.testing.assert_allclose(out.x, tr.x, atol=1e-9)
        np.testing.assert_allclose(out.y, tr.y, atol=1e-9)
        assert len(out) == len(tr)


def test_spike_attenuated():
    t = np.arange(50) / 25.0
    y = np.zeros(50)
    y[25] = 1.0
    res = smooth_positions(make_track(10 * t, y))
    w = SmoothingConfig().window_frames(25.0)
    assert res.track.y[25] == pytest.approx(1.0 / w)
    assert res.track.y[25] <= 0.2
    # the spike frame itself moves about 0.92 m, beyond the 0.5 m cap
    assert res.flagged_frames == (25,)


def test_large_displacement_flagged_not_clamped():
    t = np.arange(50) / 25.0
    y = np.zeros(50)
    y[25] = 10.0
    res = smooth_positions(make_track(10 * t, y))
    assert 25 in res.flagged_frames
    assert abs(res.track.y[25] - 10.0) > 0.5


def test_short_track_unchanged(caplog):
    tr = make_track([0.0, 1.0], [0.0, 0.0])
    res = smooth_positions(tr)
    assert res.track is tr
    assert "smoothing skipped" in caplog.text


def test_window_too_short_rejected():
    with pytest.raises(ConfigurationError):
        SmoothingConfig(window=0.05).window_frames(25.0)


@pytest.mark.parametrize("dx,dy,expected", [(1, 0, 0.0), (0, 1, math.pi / 2), (-1, 0, -math.pi)])
def test_axis_headings(dx, dy, expected):
    t = np.arange(20) / 25.0
    h = derive_heading(make_track(dx * 10 * t, dy * 10 * t)).heading
    np.testing.assert_allclose(h, expected, atol=1e-12)


def test_circle_heading_error_bounded():
    rate, r, omega = 25.0, 20.0, 0.5
    dt = 1 / rate
    t = np.arange(200) * dt
    tr = make_track(r * np.cos(omega * t), r * np.sin(omega * t), rate)
    h = headings_from_positions(tr)
    err = np.abs(np.angle(np.exp(1j * (h - (omega * t + math.pi / 2)))))
    assert err.max() <= omega * dt


def test_stationary_frames_inherit_heading():
    x = np.r_[np.linspace(0, 5, 20), np.full(10, 5.0), np.linspace(5, 5, 5)]
    y = np.r_[np.linspace(0, 5, 20), np.full(15, 5.0)]
    h = headings_from_positions(make_track(x, y))
    np.testing.assert_allclose(h[22:], h[18], atol=1e-12)


def test_never_moving_track(caplog):
    tr = make_track(np.full(10, 3.0), np.full(10, 4.0))
    h = derive_heading(tr).heading
    np.testing.assert_array_equal(h, 0.0)
    assert caplog.records


def test_uniform_speed_zero_accel():
    t = np.arange(30) / 25.0
    k = derive_kinematics(make_track(10 * t, np.zeros(30)))
    np.testing.assert_allclose(k.speed, 10.0, atol=1e-9)
    np.testing.assert_allclose(k.ax[1:-1], 0.0, atol=1e-9)
    np.testing.assert_allclose(k.ay, 0.0, atol=1e-9)


def test_constant_acceleration_exact():
    t = np.arange(30) / 25.0
    k = derive_kinematics(make_track(t * t, np.zeros(30)))
    np.testing.assert_allclose(k.ax[1:-1], 2.0, atol=1e-9)


def test_circle_centripetal():
    rate, r, v = 25.0, 20.0, 10.0
    t = np.arange(200) / rate
    w = v / r
    k = derive_kinematics(make_track(r * np.cos(w * t), r * np.sin(w * t), rate))
    a = np.hypot(k.ax, k.ay)[2:-2]
    assert np.all(np.abs(a - v * v / r) <= 0.1)


def test_derivatives_second_order():
    # error at dt and dt/2 on a smooth curve; ratio near 4
    def err(rate):
        t = np.arange(int(4 * rate) + 1) / rate
        x, y = 5 * np.sin(t), 3 * np.cos(0.7 * t)
        k = derive_kinematics(make_track(x, y, rate))
        vx, vy = 5 * np.cos(t), -2.1 * np.sin(0.7 * t)
        ax, ay = -5 * np.sin(t), -1.47 * np.cos(0.7 * t)
        sl = slice(1, -1)
        return (np.max(np.abs(k.speed[sl] - np.hypot(vx, vy)[sl])),
                np.max(np.hypot(k.ax - ax, k.ay - ay)[2:-2]))
    (s1, a1), (s2, a2) = err(10.0), err(20.0)
    assert 3.0 < s1 / s2 < 5.0
    assert 3.0 < a1 / a2 < 5.0


def test_derive_obb_examples():
    tr = make_track([0.0, 0.0], [0.0, 0.0], heading=[0.0, math.pi / 2])
    obb = derive_obb(tr).obb
    np.testing.assert_allclose(obb[0], [[2, 1], [2, -1], [-2, -1], [-2, 1]], atol=1e-12)
    np.testing.assert_allclose(obb[1], [[-1, 2], [1, 2], [1, -2], [-1, -2]], atol=1e-12)


def test_derive_obb_bad_dims():
    with pytest.raises(DataError):
        derive_obb(make_track([0.0], [0.0], heading=[0.0], length=0.0))


def test_resample_native_identity():
    tr = random_scene(1, 25.0, 2.0, seed=1).tracks[0]
    out = resample(tr, 25.0, {"speed": "measured", "acceleration_2d": "measured",
                              "obb_corners": "measured"})
    for name in ("x", "y", "heading", "speed", "ax", "ay", "obb"):
        np.testing.assert_allclose(getattr(out, name), getattr(tr, name), atol=1e-9)
    np.testing.assert_array_equal(out.frame, tr.frame)


def test_resample_linear_exact():
    t = np.arange(11) / 10.0
    tr = derive_obb(derive_kinematics(derive_heading(make_track(1 + 10 * t, 2 + 5 * t, 10.0))))
    out = resample(tr, 25.0)
    np.testing.assert_allclose(out.y - 2, (out.x - 1) / 2, atol=1e-12)
    assert len(out) == 26
    np.testing.assert_allclose(out.speed, math.hypot(10, 5), atol=1e-9)


def test_resample_heading_shortest_arc():
    tr = make_track([0.0, 1.0], [0.0, 0.0], 1.0, heading=np.radians([179.0, -179.0]))
    out = resample(tr, 2.0, {})
    assert abs(abs(math.degrees(out.heading[1])) - 180.0) < 1e-9


def test_resample_bad_rate():
    with pytest.raises(ConfigurationError):
        resample(make_track([0.0, 1.0], [0.0, 0.0]), 0.0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_completion_idempotent(seed):
    scene = random_scene(3, 25.0, 2.0, seed=seed)
    prov = {**scene.metadata.field_provenance, "heading": "missing", "speed": "missing",
            "acceleration_2d": "missing", "obb_corners": "missing"}
    meta = scene.metadata.__class__(**{**scene.metadata.__dict__, "field_provenance": prov})
    nan = lambda tr: tr.replace(heading=np.full(len(tr), np.nan), speed=np.full(len(tr), np.nan),  # noqa: E731
                                ax=np.full(len(tr), np.nan), ay=np.full(len(tr), np.nan),
                                obb=np.full((len(tr), 4, 2), np.nan))
    raw = CanonicalScene(meta, tuple(nan(tr) for tr in scene.tracks))
    once = complete_scene(raw)
    twice = complete_scene(once)
    assert once.metadata.to_dict() == twice.metadata.to_dict()
    for a, b in zip(once.tracks, twice.tracks):
        for name in ("x", "y", "heading", "speed", "ax", "ay", "obb"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        assert len(a) == len(raw.track(a.track_id))


def test_completion_parallel_matches_serial():
    scene = random_scene(6, 25.0, 2.0, seed=3)
    a = complete_scene(scene, CompletionConfig(), jobs=1)
    b = complete_scene(scene, CompletionConfig(), jobs=3)
    for ta, tb in zip(a.tracks, b.tracks):
        np.testing.assert_array_equal(ta.x, tb.x)
        np.testing.assert_array_equal(ta.obb, tb.obb)


def test_synthetic_metadata_clean():
    assert synthetic_metadata("s", 25.0).frame_rate == 25.0
