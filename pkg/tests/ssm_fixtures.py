"""Hand-built fixtures with known SSM values."""

import math

import numpy as np

from trajstd.schema import CanonicalScene
from trajstd.ssm import PairFrame
from trajstd.synthetic import synthetic_metadata, track_from_arrays

from oracles import rect


def line_pair(gap=25.0, v_follow=10.0, v_lead=0.0):
    """Two 4x2 boxes on the x axis with a bumper gap of ``gap``."""
    a = rect(0.0, 0.0, 0.0, 4.0, 2.0)
    b = rect(4.0 + gap, 0.0, 0.0, 4.0, 2.0)
    return PairFrame.build(0, a, (v_follow, 0.0), b, (v_lead, 0.0))


def parked_track(track_id, rate, n, present, where, away):
    """Stationary track at ``where`` for frames in ``present``, else at ``away``."""
    frames = np.arange(n)
    pos = np.where(present(frames)[:, None], np.asarray(where, float), np.asarray(away, float))
    z = np.zeros(n)
    return track_from_arrays(track_id, frames, rate, pos[:, 0], pos[:, 1], z, z, z, z,
                             length=4.0, width=2.0)


def pet_scene(rate=10.0):
    """A occupies the origin until t = 10.0 s; B arrives there at t = 12.5 s."""
    n = 200
    a = parked_track("1", rate, n, lambda f: f <= round(10.0 * rate), (0.0, 0.0), (0.0, 1000.0))
    b = parked_track("2", rate, n, lambda f: f >= round(12.5 * rate), (0.0, 0.0), (0.0, -1000.0))
    return CanonicalScene(synthetic_metadata("pet", rate), (a, b))


def transform_scene(scene, angle=0.0, shift=(0.0, 0.0), scale=1.0):
    """Rotate by ``angle``, scale lengths by ``scale`` and then translate."""
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    tracks = []
    for tr in scene.tracks:
        xy = scale * np.stack([tr.x, tr.y], axis=1) @ rot.T + shift
        acc = scale * np.stack([tr.ax, tr.ay], axis=1) @ rot.T
        obb = scale * tr.obb @ rot.T + shift
        h = np.angle(np.exp(1j * (tr.heading + angle)))
        h = np.where(h >= math.pi, h - 2 * math.pi, h)
        tracks.append(tr.replace(x=xy[:, 0], y=xy[:, 1], heading=h, speed=scale * tr.speed,
                                 ax=acc[:, 0], ay=acc[:, 1], obb=obb, length=scale * tr.length,
                                 width=scale * tr.width))
    return scene.replace(tracks=tuple(tracks))
