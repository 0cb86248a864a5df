"""Trajectory completion: smoothing, heading, speed/acceleration, OBB corners,
resampling, and the scene-level pipeline that chains them.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, DataError
from .geometry import obb_corners
from .schema import CanonicalScene, SceneMetadata, Track, normalize_angle

log = logging.getLogger(__name__)

SMOOTHING_METHODS = ("centered_moving_average", "savitzky_golay_order2")
EPS_STOP = 0.02


@dataclass(frozen=True)
class SmoothingConfig:
    window: float = 0.5
    method: str = "centered_moving_average"
    max_displacement: float = 0.5
    endpoint_policy: str = "shrink-window"

    def __post_init__(self):
        if self.method not in SMOOTHING_METHODS:
            raise ConfigurationError(f"unknown smoothing method {self.method!r}")
        if self.endpoint_policy != "shrink-window":
            raise ConfigurationError("only the shrink-window endpoint policy is supported")
        if not self.window > 0 or not self.max_displacement > 0:
            raise ConfigurationError("window and max_displacement must be positive")

    def window_frames(self, frame_rate: float) -> int:
        """Odd number of frames spanned by the window at ``frame_rate``."""
        steps = self.window * frame_rate
        if steps < 2 - 1e-9:
            raise ConfigurationError(
                f"smoothing window {self.window} s is shorter than 2 frame steps at {frame_rate} Hz")
        w = max(3, int(round(steps)))
        return w if w % 2 else w + 1


@dataclass(frozen=True)
class CompletionConfig:
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    eps_stop: float = EPS_STOP
    smooth: bool = True

    def to_dict(self) -> dict:
        return {"smoothing": dataclasses.asdict(self.smoothing), "eps_stop": self.eps_stop,
                "smooth": self.smooth}


def frame_step(track: Track) -> float:
    """Seconds per frame, recovered from the track's own time stamps."""
    if len(track) < 2:
        raise DataError(f"track {track.track_id}: need two states to infer the frame step")
    return float((track.t[-1] - track.t[0]) / (track.frame[-1] - track.frame[0]))


# ---------------------------------------------------------------------------
# smoothing
# ---------------------------------------------------------------------------

def _sg2_weights(h: int) -> np.ndarray:
    j = np.arange(-h, h + 1, dtype=float)
    num = 3.0 * (3 * h * h + 3 * h - 1) - 15.0 * j * j
    return num / ((2 * h - 1) * (2 * h + 1) * (2 * h + 3))


def _weights(h: int, method: str) -> np.ndarray:
    if h == 0:
        return np.ones(1)
    if method == "centered_moving_average":
        return np.full(2 * h + 1, 1.0 / (2 * h + 1))
    return _sg2_weights(h)


def smooth_series(y: np.ndarray, w: int, method: str) -> np.ndarray:
    """Centered filter of odd width ``w``; the window shrinks symmetrically at the ends."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    h = w // 2
    out = y.copy()
    if n < 3:
        return out
    if n > 2 * h:
        out[h:n - h] = np.convolve(y, _weights(h, method)[::-1], mode="valid")
    for i in list(range(min(h, n))) + list(range(max(n - h, h), n)):
        hi = min(h, i, n - 1 - i)
        out[i] = float(np.dot(_weights(hi, method), y[i - hi:i + hi + 1]))
    return out


class SmoothResult(NamedTuple):
    track: Track
    flagged_frames: tuple[int, ...]


def smooth_positions(track: Track, cfg: SmoothingConfig | None = None) -> SmoothResult:
    """Smooth x and y. Frames moved further than ``cfg.max_displacement`` are
    reported in ``flagged_frames`` (values are kept, not clamped)."""
    cfg = cfg or SmoothingConfig()
    if len(track) < 3:
        log.warning("track %s has %d states; smoothing skipped", track.track_id, len(track))
        return SmoothResult(track, ())
    w = cfg.window_frames(1.0 / frame_step(track))
    xs = smooth_series(track.x, w, cfg.method)
    ys = smooth_series(track.y, w, cfg.method)
    moved = np.hypot(xs - track.x, ys - track.y)
    flagged = tuple(int(f) for f in track.frame[moved > cfg.max_displacement])
    if flagged:
        log.warning("track %s: %d frames moved more than %.2f m by smoothing",
                    track.track_id, len(flagged), cfg.max_displacement)
    return SmoothResult(track.replace(x=xs, y=ys), flagged)


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

def _gradient(v: np.ndarray, dt: float) -> np.ndarray:
    n = len(v)
    if n >= 3:
        return np.gradient(v, dt, edge_order=2)
    if n == 2:
        return np.gradient(v, dt, edge_order=1)
    return np.zeros(n)


def velocity(track: Track) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference velocity (second-order one-sided at the ends)."""
    if len(track) < 2:
        return np.zeros(len(track)), np.zeros(len(track))
    dt = frame_step(track)
    return _gradient(track.x, dt), _gradient(track.y, dt)


def _fill_from_moving(values: np.ndarray, moving: np.ndarray) -> np.ndarray:
    """Stationary entries take the last moving value; leading ones the first."""
    n = len(values)
    idx = np.where(moving, np.arange(n), -1)
    last = np.maximum.accumulate(idx)
    first = int(np.argmax(moving))
    last[last < 0] = first
    return values[last]


def headings_from_positions(track: Track, eps_stop: float = EPS_STOP) -> np.ndarray:
    n = len(track)
    if n < 2:
        return np.zeros(n)
    vx, vy = velocity(track)
    dt = frame_step(track)
    # displacement across the central-difference stencil (two frame steps)
    disp = np.hypot(vx, vy) * 2 * dt
    moving = disp >= eps_stop
    if not moving.any():
        log.warning("track %s never moves; heading set to 0", track.track_id)
        return np.zeros(n)
    h = normalize_angle(np.arctan2(vy, vx))
    return _fill_from_moving(h, moving)


def derive_heading(track: Track, eps_stop: float = EPS_STOP) -> Track:
    """Heading from central-difference displacement, normalised to [-pi, pi)."""
    return track.replace(heading=headings_from_positions(track, eps_stop))


def derive_kinematics(track: Track) -> Track:
    """Speed and 2D acceleration by central differences of position and velocity."""
    n = len(track)
    if n < 2:
        z = np.zeros(n)
        return track.replace(speed=z, ax=z, ay=z)
    dt = frame_step(track)
    vx, vy = velocity(track)
    return track.replace(speed=np.hypot(vx, vy), ax=_gradient(vx, dt), ay=_gradient(vy, dt))


def derive_obb(track: Track) -> Track:
    if not (track.length > 0 and track.width > 0):
        raise DataError(f"track {track.track_id}: length/width must be positive "
                        f"(got {track.length}, {track.width})")
    if np.any(~np.isfinite(track.heading)):
        raise DataError(f"track {track.track_id}: heading missing; derive it first")
    return track.replace(obb=obb_corners(track.x, track.y, track.heading, track.length, track.width))


def dims_from_corners(obb: np.ndarray) -> tuple[float, float]:
    """Median length (front-to-rear edge) and width (left-to-right edge)."""
    ok = np.all(np.isfinite(obb), axis=(1, 2))
    if not ok.any():
        return math.nan, math.nan
    c = obb[ok]
    length = 0.5 * (np.hypot(*(c[:, 0] - c[:, 3]).T) + np.hypot(*(c[:, 1] - c[:, 2]).T))
    width = 0.5 * (np.hypot(*(c[:, 0] - c[:, 1]).T) + np.hypot(*(c[:, 3] - c[:, 2]).T))
    return float(np.median(length)), float(np.median(width))


def classify_agent(length: float, width: float) -> str:
    """Size-based agent class used when the source has no class column."""
    if not (length > 0 and width > 0):
        return "unknown"
    if length < 1.0 and width < 1.0:
        return "pedestrian"
    if length < 2.6 and width < 1.2:
        return "motorcycle"
    if length > 12.0:
        return "bus"
    if length > 6.5:
        return "truck"
    return "car"


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

def _unwrap_interp(t_new, t, heading):
    return normalize_angle(np.interp(t_new, t, np.unwrap(heading)))


def resample(track: Track, target_rate: float, provenance: dict[str, str] | None = None,
             eps_stop: float = EPS_STOP) -> Track:
    """Re-grid the track at ``target_rate`` Hz.

    Positions are interpolated linearly and heading along the shortest arc.
    Fields whose provenance is ``derived`` (the default when no provenance is
    given) are recomputed from the new positions instead of interpolated.
    """
    if not target_rate > 0:
        raise ConfigurationError("target_rate must be positive")
    prov = provenance or {}
    derived = lambda name: prov.get(name, "derived") == "derived"  # noqa: E731
    t = track.t
    k0 = math.ceil(t[0] * target_rate - 1e-9)
    k1 = math.floor(t[-1] * target_rate + 1e-9)
    if k1 < k0:
        raise DataError(f"track {track.track_id}: no grid point inside its time span")
    frames = np.arange(k0, k1 + 1, dtype=np.int64)
    t_new = np.clip(frames / target_rate, t[0], t[-1])
    interp = lambda v: np.interp(t_new, t, v)  # noqa: E731
    n = len(frames)
    heading = (_unwrap_interp(t_new, t, track.heading) if np.all(np.isfinite(track.heading))
               else np.full(n, np.nan))
    pixel = None if track.pixel is None else np.stack(
        [interp(track.pixel[:, 0]), interp(track.pixel[:, 1])], axis=1)
    out = Track(
        track_id=track.track_id, agent_type=track.agent_type, length=track.length,
        width=track.width, frame=frames, t=frames / target_rate, x=interp(track.x),
        y=interp(track.y), heading=heading, speed=interp(track.speed), ax=interp(track.ax),
        ay=interp(track.ay), obb=np.stack([interp(track.obb[:, i, j]) for i in range(4)
                                           for j in range(2)], axis=1).reshape(n, 4, 2),
        pixel=pixel,
    )
    if n >= 2:
        kin = derive_kinematics(out)
        if derived("speed") and np.all(np.isfinite(track.speed)):
            out = out.replace(speed=kin.speed)
        if derived("acceleration_2d") and np.all(np.isfinite(track.ax)):
            out = out.replace(ax=kin.ax, ay=kin.ay)
    if derived("obb_corners") and np.all(np.isfinite(heading)) and out.length > 0 and out.width > 0:
        out = derive_obb(out)
    return out


# ---------------------------------------------------------------------------
# scene completion
# ---------------------------------------------------------------------------

def _fill(measured: np.ndarray, derived: np.ndarray) -> np.ndarray:
    return np.where(np.isfinite(measured), measured, derived)


def complete_track(track: Track, meta: SceneMetadata, cfg: CompletionConfig) -> tuple[Track, dict]:
    """Fill every derivable field of one track. Returns the track and the
    provenance each field ends up with."""
    prov = meta.field_provenance
    cp = meta.converter_provenance
    result: dict[str, str] = {}
    tr = track
    if len(tr) >= 3 and cfg.smooth and not cp.get("completion", {}).get("positions_smoothed"):
        tr = smooth_positions(tr, cfg.smoothing).track
    if cp.get("position_reference") == "front_bumper":
        if not tr.length > 0:
            raise DataError(f"track {tr.track_id}: front-bumper positions need a vehicle length")
        hb = headings_from_positions(tr, cfg.eps_stop)
        half = tr.length / 2.0
        tr = tr.replace(x=tr.x - half * np.cos(hb), y=tr.y - half * np.sin(hb))
        result["position_xy"] = "derived"

    h_derived = headings_from_positions(tr, cfg.eps_stop)
    if prov.get("heading") == "measured":
        heading = normalize_angle(_fill(tr.heading, h_derived))
    else:
        heading = h_derived
        result["heading"] = "derived"
    kin = derive_kinematics(tr)
    if prov.get("speed") == "measured":
        speed = _fill(tr.speed, kin.speed)
    else:
        speed = kin.speed
        result["speed"] = "derived"
    if prov.get("acceleration_2d") == "measured":
        ax, ay = _fill(tr.ax, kin.ax), _fill(tr.ay, kin.ay)
    else:
        ax, ay = kin.ax, kin.ay
        result["acceleration_2d"] = "derived"
    if result.get("heading") == "derived" and len(tr) > 1:
        moving = speed != 0
        if moving.any() and not moving.all():
            heading = _fill_from_moving(heading, moving)
    tr = tr.replace(heading=heading, speed=speed, ax=ax, ay=ay)

    length, width = tr.length, tr.width
    if not (length > 0 and width > 0):
        cl, cw = dims_from_corners(tr.obb)
        length = length if length > 0 else cl
        width = width if width > 0 else cw
        result["length"] = result["width"] = "derived"
        tr = tr.replace(length=length, width=width)
    if length > 0 and width > 0:
        boxes = obb_corners(tr.x, tr.y, tr.heading, length, width)
        if prov.get("obb_corners") == "measured":
            ok = np.all(np.isfinite(tr.obb), axis=(1, 2))
            tr = tr.replace(obb=np.where(ok[:, None, None], tr.obb, boxes))
        else:
            tr = tr.replace(obb=boxes)
            result["obb_corners"] = "derived"
    if tr.agent_type is None:
        tr = tr.replace(agent_type=classify_agent(length, width))
        result["agent_type"] = "derived"
    return tr, result


def _complete_star(args):
    return complete_track(*args)


def complete_scene(scene: CanonicalScene, cfg: CompletionConfig | None = None,
                   jobs: int = 1) -> CanonicalScene:
    """Run the full completion pipeline. Idempotent: positions are smoothed
    once and the fact is recorded in the scene's converter provenance."""
    cfg = cfg or CompletionConfig()
    meta = scene.metadata
    args = [(tr, meta, cfg) for tr in scene.tracks]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_complete_star, args, chunksize=max(1, len(args) // (4 * jobs))))
    else:
        results = [complete_track(*a) for a in args]
    tracks = tuple(r[0] for r in results)

    prov = dict(meta.field_provenance)
    for field_name in ("position_xy", "heading", "speed", "acceleration_2d", "obb_corners",
                       "length", "width", "agent_type"):
        if any(field_name in r[1] for r in results) and prov.get(field_name) != "measured":
            prov[field_name] = "derived"
    if not tracks:
        for field_name in ("heading", "speed", "acceleration_2d", "obb_corners"):
            if prov.get(field_name) == "missing":
                prov[field_name] = "derived"
    if prov.get("position_xy") == "missing" and meta.converter_provenance.get("position_reference") == "front_bumper":
        prov["position_xy"] = "derived"
    frame = dict(meta.coordinate_frame)
    if not frame.get("calibration") and frame.get("units") == "m":
        frame["calibration"] = {
            "method": "unit_normalized_native_frame",
            "note": "native coordinates rescaled to meters with exact unit factors; "
                    "no pixel-to-metric mapping supplied by the source",
        }
        prov["metric_coordinate_calibration"] = "derived"
    cp = dict(meta.converter_provenance)
    if cp.get("position_reference") == "front_bumper":
        cp["position_reference"] = "center"
        cp["position_reference_original"] = "front_bumper"
    already = cp.get("completion", {}).get("positions_smoothed", False)
    cp["completion"] = {**cfg.to_dict(), "positions_smoothed": bool(already or cfg.smooth)}
    new_meta = dataclasses.replace(meta, field_provenance=prov, coordinate_frame=frame,
                                   converter_provenance=cp)
    return scene.replace(metadata=new_meta, tracks=tracks)
