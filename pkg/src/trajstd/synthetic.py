"""Analytic synthetic scenes with exact kinematics.

Tracks follow p(t) = p0 + R(phi) [v0 t + a t^2 / 2, B sin(w t)], so heading,
speed and acceleration are known in closed form. Used as ground truth for
round-trip checks and as SSM / calibration fixtures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import obb_corners
from .schema import CanonicalScene, SceneMetadata, Track, default_provenance, normalize_angle


@dataclass(frozen=True)
class AnalyticPath:
    x0: float
    y0: float
    phi: float
    v0: float
    accel: float = 0.0
    lat_amp: float = 0.0
    lat_omega: float = 0.0

    def evaluate(self, t: np.ndarray):
        u = self.v0 * t + 0.5 * self.accel * t * t
        du = self.v0 + self.accel * t
        ddu = np.full_like(t, self.accel)
        w = self.lat_amp * np.sin(self.lat_omega * t)
        dw = self.lat_amp * self.lat_omega * np.cos(self.lat_omega * t)
        ddw = -self.lat_amp * self.lat_omega ** 2 * np.sin(self.lat_omega * t)
        c, s = math.cos(self.phi), math.sin(self.phi)
        x = self.x0 + c * u - s * w
        y = self.y0 + s * u + c * w
        vx, vy = c * du - s * dw, s * du + c * dw
        ax, ay = c * ddu - s * ddw, s * ddu + c * ddw
        return x, y, vx, vy, ax, ay


def track_from_arrays(track_id: str, frame, frame_rate: float, x, y, vx, vy, ax, ay, *,
                      length: float = 4.5, width: float = 1.8, agent_type: str = "car") -> Track:
    frame = np.asarray(frame, dtype=np.int64)
    speed = np.hypot(vx, vy)
    heading = normalize_angle(np.arctan2(vy, vx))
    moving = speed > 0
    if moving.any() and not moving.all():
        idx = np.maximum.accumulate(np.where(moving, np.arange(len(speed)), -1))
        idx[idx < 0] = int(np.argmax(moving))
        heading = heading[idx]
    return Track(track_id=track_id, agent_type=agent_type, length=length, width=width,
                 frame=frame, t=frame / frame_rate, x=x, y=y, heading=heading, speed=speed,
                 ax=ax, ay=ay, obb=obb_corners(x, y, heading, length, width))


def analytic_track(track_id: str, path: AnalyticPath, frame_rate: float, first_frame: int,
                   n_frames: int, **kw) -> Track:
    frame = np.arange(first_frame, first_frame + n_frames, dtype=np.int64)
    t = (frame - first_frame) / frame_rate
    return track_from_arrays(track_id, frame, frame_rate, *path.evaluate(t), **kw)


def synthetic_metadata(scene_id: str, frame_rate: float, dataset_name: str = "synthetic") -> SceneMetadata:
    prov = default_provenance("measured")
    prov["pixel_xy"] = "missing"
    return SceneMetadata(
        scene_id=scene_id, dataset_name=dataset_name, frame_rate=frame_rate,
        field_provenance=prov,
        coordinate_frame={"origin": "synthetic origin", "axes": "x right, y up; heading ccw from +x",
                          "units": "m", "calibration": {"method": "synthetic"}},
        capture_modality="synthetic",
        converter_provenance={"source_format": "synthetic"},
    )


def random_scene(n_tracks: int, frame_rate: float, duration: float, seed: int, *,
                 highway: bool = True, scene_id: str = "synthetic") -> CanonicalScene:
    """Seeded random scene. ``highway`` keeps travel along +/-x (needed for
    formats with axis-aligned boxes); otherwise directions are arbitrary."""
    rng = np.random.default_rng(seed)
    n_frames = int(round(duration * frame_rate)) + 1
    tracks = []
    for i in range(n_tracks):
        phi = float(rng.choice([0.0, math.pi])) if highway else float(rng.uniform(-math.pi, math.pi))
        v0 = float(rng.uniform(8.0, 30.0))
        # keep at least 4 m/s at the end so no vehicle stops and reverses
        accel = max(float(rng.uniform(-0.5, 0.5)), (4.0 - v0) / duration)
        kind = rng.random()
        length, width, agent = ((float(rng.uniform(4.0, 5.2)), float(rng.uniform(1.7, 2.0)), "car")
                                if kind < 0.85 else
                                (float(rng.uniform(8.0, 16.0)), float(rng.uniform(2.4, 2.6)), "truck"))
        path = AnalyticPath(x0=float(rng.uniform(0, 200)), y0=3.7 * (i % 6) + 2.0, phi=phi, v0=v0,
                            accel=accel, lat_amp=float(rng.uniform(0.0, 1.5)),
                            lat_omega=float(rng.uniform(0.2, 0.6)))
        first = int(rng.integers(0, max(1, n_frames // 4)))
        tracks.append(analytic_track(str(i + 1), path, frame_rate, first, n_frames - first,
                                     length=length, width=width, agent_type=agent))
    return CanonicalScene(synthetic_metadata(scene_id, frame_rate), tuple(tracks))


# ---------------------------------------------------------------------------
# SSM fixtures
# ---------------------------------------------------------------------------

def _piecewise_braking(t: np.ndarray, x0: float, v0: float, t_brake: float, decel: float,
                       v_end: float):
    """Constant speed, then constant deceleration down to ``v_end``."""
    t_stop = t_brake + (v0 - v_end) / decel
    x = np.empty_like(t)
    v = np.empty_like(t)
    a = np.zeros_like(t)
    pre = t <= t_brake
    mid = (t > t_brake) & (t <= t_stop)
    post = t > t_stop
    x[pre] = x0 + v0 * t[pre]
    v[pre] = v0
    tau = t[mid] - t_brake
    x[mid] = x0 + v0 * t_brake + v0 * tau - 0.5 * decel * tau ** 2
    v[mid] = v0 - decel * tau
    a[mid] = -decel
    tb = t_stop - t_brake
    x_stop = x0 + v0 * t_brake + v0 * tb - 0.5 * decel * tb ** 2
    x[post] = x_stop + v_end * (t[post] - t_stop)
    v[post] = v_end
    return x, v, a


def braking_scene(initial_gap: float = 40.0, t_brake: float = 3.1, frame_rate: float = 25.0,
                  duration: float = 8.0, decel: float = 8.0) -> CanonicalScene:
    """Follower at 20 m/s closes on a 10 m/s leader and brakes to 10 m/s at
    ``t_brake``. Both travel along +x in one lane. With the defaults the
    bumper gap at brake onset is 9 m and the minimum TTC is about 0.83 s.

    The brake time is held fixed so a larger ``initial_gap`` shifts every
    sampled gap by the same amount.
    """
    length, width = 4.5, 1.8
    n = int(round(duration * frame_rate)) + 1
    frame = np.arange(n)
    t = frame / frame_rate
    xf, vf, af = _piecewise_braking(t, 0.0, 20.0, t_brake, decel, 10.0)
    xl = initial_gap + length + 10.0 * t
    z = np.zeros(n)
    leader = track_from_arrays("1", frame, frame_rate, xl, z, np.full(n, 10.0), z, z, z,
                               length=length, width=width)
    follower = track_from_arrays("2", frame, frame_rate, xf, z, vf, z, af, z,
                                 length=length, width=width)
    return CanonicalScene(synthetic_metadata("braking", frame_rate), (leader, follower))


def crossing_scene(frame_rate: float = 25.0, duration: float = 6.0, brake_time: float = 1.45,
                   decel: float = 7.0) -> CanonicalScene:
    """Vehicle 1 crosses along +x at 10 m/s. Vehicle 2 approaches along +y on
    a collision course and brakes to a stop short of the conflict area."""
    length, width = 4.5, 1.8
    n = int(round(duration * frame_rate)) + 1
    frame = np.arange(n)
    t = frame / frame_rate
    z = np.zeros(n)
    # vehicle 1 centre reaches x = 0 at t = 3 s
    x1 = -30.0 + 10.0 * t
    a_track = track_from_arrays("1", frame, frame_rate, x1, z, np.full(n, 10.0), z, z, z,
                                length=length, width=width)
    # vehicle 2 centre would reach y = 0 at t = 3 s at constant speed
    y2, v2, a2 = _piecewise_braking(t, -30.0, 10.0, brake_time, decel, 0.0)
    b_track = track_from_arrays("2", frame, frame_rate, z, y2, z, v2, z, a2,
                                length=length, width=width)
    return CanonicalScene(synthetic_metadata("crossing", frame_rate), (a_track, b_track))


def free_flow_scene(frame_rate: float = 25.0, duration: float = 5.0) -> CanonicalScene:
    """Three vehicles at identical speed, 100 m apart."""
    n = int(round(duration * frame_rate)) + 1
    tracks = []
    for i in range(3):
        path = AnalyticPath(x0=100.0 * i, y0=0.0, phi=0.0, v0=25.0)
        tracks.append(analytic_track(str(i + 1), path, frame_rate, 0, n))
    return CanonicalScene(synthetic_metadata("free_flow", frame_rate), tuple(tracks))


# ---------------------------------------------------------------------------
# car-following fixtures
# ---------------------------------------------------------------------------

def leader_profile(frame_rate: float = 10.0, duration: float = 90.0) -> tuple[np.ndarray, np.ndarray]:
    """Leader speed cycle: near free flow, a hard slowdown to rest, then a
    recovery. Visiting high speeds keeps the desired speed identifiable."""
    dt = 1.0 / frame_rate
    t = np.arange(int(round(duration * frame_rate)) + 1) * dt
    knots_t = [0.0, 15.0, 30.0, 40.0, 48.0, 55.0, 70.0, 80.0, duration]
    knots_v = [20.0, 29.0, 29.0, 8.0, 0.0, 0.0, 25.0, 18.0, 22.0]
    v = np.interp(t, knots_t, knots_v)
    x = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * dt)]) + 200.0
    return x, v


def idm_pair(params=None, frame_rate: float = 10.0, duration: float = 90.0):
    """Leader from :func:`leader_profile` and an IDM follower started at its
    equilibrium gap. Returns a :class:`CfPair`."""
    from .traffic_models.idm import CfPair, IdmParams, simulate_idm

    params = params or IdmParams()
    xl, vl = leader_profile(frame_rate, duration)
    v0 = float(vl[0])
    s_eq = (params.s0_jam + v0 * params.T) / math.sqrt(1.0 - (v0 / params.v0) ** 4)
    run = simulate_idm(xl, vl, float(xl[0]) - s_eq - 4.5, v0, params, 1.0 / frame_rate)
    return CfPair(xl, vl, run.x, run.v, 1.0 / frame_rate)


def pair_scene(pair, scene_id: str = "cf_pair") -> CanonicalScene:
    """Leader "1" and follower "2" of a car-following pair as a scene along +x."""
    rate = 1.0 / pair.dt
    n = len(pair.leader_x)
    frame = np.arange(n)
    z = np.zeros(n)
    tracks = []
    for tid, x, v in (("1", pair.leader_x, pair.leader_v), ("2", pair.follower_x, pair.follower_v)):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        a = np.gradient(v, pair.dt)
        tracks.append(track_from_arrays(tid, frame, rate, x, z, v, z, a, z))
    return CanonicalScene(synthetic_metadata(scene_id, rate), tuple(tracks))
