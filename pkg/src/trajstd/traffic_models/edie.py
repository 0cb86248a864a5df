"""Macroscopic state over a space-time region (Edie's generalized definitions)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from ..schema import CanonicalScene, Track


@dataclass(frozen=True)
class SpaceTimeRegion:
    s0: float
    s1: float
    t0: float
    t1: float
    axis: tuple[float, float] = (1.0, 0.0)

    def __post_init__(self):
        if not self.s1 > self.s0:
            raise ConfigurationError("region needs s1 > s0")
        if not self.t1 > self.t0:
            raise ConfigurationError("region needs t1 > t0")
        n = math.hypot(*self.axis)
        if not n > 0:
            raise ConfigurationError("region axis must be nonzero")
        object.__setattr__(self, "axis", (self.axis[0] / n, self.axis[1] / n))

    @property
    def length(self) -> float:
        return self.s1 - self.s0

    @property
    def duration(self) -> float:
        return self.t1 - self.t0


@dataclass(frozen=True)
class MacroState:
    """Flow ``q`` (veh/s), density ``k`` (veh/m) and space-mean speed ``v``
    (m/s). ``v`` is None and ``empty`` is set when nobody entered the region."""

    q: float
    k: float
    v: float | None
    empty: bool = False


def _clip_segments(t: np.ndarray, s: np.ndarray, region: SpaceTimeRegion):
    """Clip each linear piece (t_i, s_i)-(t_i+1, s_i+1) to the region.

    Returns time spent and absolute distance covered inside, per piece.
    """
    ta, tb = t[:-1], t[1:]
    sa, sb = s[:-1], s[1:]
    dt, ds = tb - ta, sb - sa
    lo = np.zeros_like(dt)
    hi = np.ones_like(dt)
    for d, start, bmin, bmax in ((dt, ta, region.t0, region.t1), (ds, sa, region.s0, region.s1)):
        moving = d != 0
        with np.errstate(divide="ignore", invalid="ignore"):
            u0 = (bmin - start) / d
            u1 = (bmax - start) / d
        enter = np.where(moving, np.minimum(u0, u1), -np.inf)
        leave = np.where(moving, np.maximum(u0, u1), np.inf)
        outside = ~moving & ((start < bmin) | (start > bmax))
        lo = np.maximum(lo, enter)
        hi = np.minimum(hi, leave)
        hi = np.where(outside, -np.inf, hi)
    frac = np.clip(hi - lo, 0.0, None)
    return frac * dt, frac * np.abs(ds)


def track_contribution(track: Track, region: SpaceTimeRegion) -> tuple[float, float]:
    """(distance travelled, time spent) by one track inside the region."""
    if len(track) < 2:
        return 0.0, 0.0
    s = track.x * region.axis[0] + track.y * region.axis[1]
    ok = np.isfinite(s)
    time_in, dist_in = _clip_segments(track.t, s, region)
    good = ok[:-1] & ok[1:]
    return float(dist_in[good].sum()), float(time_in[good].sum())


def edie_aggregate(scene: CanonicalScene, region: SpaceTimeRegion) -> MacroState:
    area = region.length * region.duration
    dist = 0.0
    time = 0.0
    for tr in scene.tracks:
        d, t = track_contribution(tr, region)
        dist += d
        time += t
    if time <= 0:
        return MacroState(0.0, 0.0, None, empty=True)
    q = dist / area
    k = time / area
    return MacroState(q, k, q / k)
