"""Surrogate safety measures and risky-event mining.

All per-frame measures for a pair of agents come out of one pass:
1D TTC, 2D TTC (exact swept-OBB collision time), DRAC and CAI per frame,
plus PET, TET and TIT per event.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Any, Sequence

import numpy as np

from .errors import ConfigurationError, PreconditionError
from .geometry import polygon_clearance, swept_collision_time
from .geometry import swept_collision_time_batch
from .schema import CanonicalScene, Track, compute_coverage, normalize_angle, track_sort_key
from .spatial import candidate_pairs

log = logging.getLogger(__name__)

CONFLICT_TYPES = ("rear_end", "sideswipe", "angle", "head_on")
CAI_DEFINITION = "madr_minus_drac"


@dataclass(frozen=True)
class SsmConfig:
    ttc_star: float = 1.5
    event_ttc_threshold: float = 3.0
    madr: float = 3.4
    pet_cell: float = 0.5
    pet_max: float = 5.0
    pair_radius: float = 30.0
    drac_cap: float = 20.0
    severity_level3: float = 1.0
    severity_level2: float = 1.5
    severity_level1: float = 3.0
    rear_end_max_deg: float = 30.0
    head_on_min_deg: float = 150.0

    def __post_init__(self):
        problems = [f.name for f in fields(self) if not (getattr(self, f.name) > 0)]
        if problems:
            raise ConfigurationError(f"thresholds must be positive: {', '.join(problems)}")
        if not self.severity_level3 < self.severity_level2 < self.severity_level1:
            raise ConfigurationError("severity bins must satisfy level3 < level2 < level1")
        if not self.rear_end_max_deg < self.head_on_min_deg <= 180.0:
            raise ConfigurationError("classification angles must satisfy rear_end < head_on <= 180")

    def to_dict(self) -> dict[str, Any]:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["cai_definition"] = CAI_DEFINITION
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SsmConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names - {"cai_definition"}
        if unknown:
            raise ConfigurationError(f"unknown ssm settings: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items() if k in names})


@dataclass(frozen=True)
class PairFrame:
    """Snapshot of two agents at one frame."""

    frame: int
    obb_a: np.ndarray
    obb_b: np.ndarray
    v_a: np.ndarray
    v_b: np.ndarray
    clearance: float

    @classmethod
    def build(cls, frame: int, obb_a, v_a, obb_b, v_b) -> "PairFrame":
        obb_a = np.asarray(obb_a, dtype=float)
        obb_b = np.asarray(obb_b, dtype=float)
        return cls(int(frame), obb_a, obb_b, np.asarray(v_a, dtype=float),
                   np.asarray(v_b, dtype=float), polygon_clearance(obb_a, obb_b))


def _unit(heading: float) -> np.ndarray:
    return np.array([math.cos(heading), math.sin(heading)])


def longitudinal_gap(pair: PairFrame, follower_heading: float) -> tuple[float, float] | None:
    """Bumper gap and closing speed along ``follower_heading``.

    The agent whose centre lies further back along the axis is the follower.
    Returns None when the footprints do not overlap laterally, since there is
    no bumper-to-bumper relation then.
    """
    u = _unit(follower_heading)
    n = np.array([-u[1], u[0]])
    la, lb = pair.obb_a @ n, pair.obb_b @ n
    if la.max() < lb.min() or lb.max() < la.min():
        return None
    pa, pb = pair.obb_a @ u, pair.obb_b @ u
    if pa.mean() <= pb.mean():
        foll, lead, vf, vl = pa, pb, pair.v_a, pair.v_b
    else:
        foll, lead, vf, vl = pb, pa, pair.v_b, pair.v_a
    gap = float(lead.min() - foll.max())
    closing = float((vf - vl) @ u)
    return gap, closing


def compute_ttc_1d(pair: PairFrame, follower_heading: float) -> float | None:
    g = longitudinal_gap(pair, follower_heading)
    if g is None:
        return None
    gap, closing = g
    if closing <= 0 or gap < 0:
        return None
    t = gap / closing
    return t if math.isfinite(t) else None


def compute_drac(pair: PairFrame, follower_heading: float, cap: float = 20.0) -> tuple[float | None, bool]:
    """DRAC and a flag set when the value was capped."""
    g = longitudinal_gap(pair, follower_heading)
    if g is None:
        return None, False
    gap, closing = g
    if closing <= 0 or gap < 0:
        return None, False
    if gap == 0 or closing * closing / (2.0 * gap) > cap:
        return cap, True
    return closing * closing / (2.0 * gap), False


def compute_cai(drac: float, madr: float) -> float:
    return madr - drac


def compute_tet_tit(ttc: Sequence[float | None], dt: float, ttc_star: float) -> tuple[float, float]:
    """Time exposed and time integrated below ``ttc_star``. Absent values are skipped."""
    tet = 0.0
    tit = 0.0
    for v in ttc:
        if v is None or not v < ttc_star:
            continue
        tet += dt
        if v > 0:
            tit += (1.0 / v - 1.0 / ttc_star) * dt
    return tet, tit


# ---------------------------------------------------------------------------
# PET
# ---------------------------------------------------------------------------

def _anchor(a: Track, b: Track) -> tuple[np.ndarray, float]:
    first = a if track_sort_key(a.track_id) <= track_sort_key(b.track_id) else b
    return np.array([first.x[0], first.y[0]]), float(first.heading[0])


def _occupancy(obb: np.ndarray, t: np.ndarray, origin: np.ndarray, heading: float,
               cell: float) -> dict[tuple[int, int], tuple[float, float]]:
    """First and last time each grid cell centre lies inside the footprint."""
    c, s = math.cos(heading), math.sin(heading)
    rot = np.array([[c, s], [-s, c]])
    local = (obb - origin) @ rot.T
    occ: dict[tuple[int, int], tuple[float, float]] = {}
    for k in range(len(t)):
        poly = local[k]
        if not np.isfinite(poly).all():
            continue
        i0, j0 = np.floor(poly.min(axis=0) / cell).astype(int)
        i1, j1 = np.floor(poly.max(axis=0) / cell).astype(int)
        ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
        pts = np.stack([(ii.ravel() + 0.5) * cell, (jj.ravel() + 0.5) * cell], axis=1)
        inside = np.ones(len(pts), dtype=bool)
        area_sign = 0.0
        for e in range(4):
            p, q = poly[e], poly[(e + 1) % 4]
            area_sign += p[0] * q[1] - q[0] * p[1]
        sign = 1.0 if area_sign > 0 else -1.0
        for e in range(4):
            p, q = poly[e], poly[(e + 1) % 4]
            cross = (q[0] - p[0]) * (pts[:, 1] - p[1]) - (q[1] - p[1]) * (pts[:, 0] - p[0])
            inside &= sign * cross >= 0
        tk = float(t[k])
        for key in zip(ii.ravel()[inside].tolist(), jj.ravel()[inside].tolist()):
            prev = occ.get(key)
            occ[key] = (tk, tk) if prev is None else (prev[0], tk)
    return occ


def compute_pet(track_a: Track, track_b: Track, cfg: SsmConfig | None = None) -> float | None:
    """Post-encroachment time over a shared grid of ``cfg.pet_cell`` cells.

    The grid is anchored at the first state of the lower-id track, so the
    value does not depend on argument order or on a rigid motion of the scene.
    """
    cfg = cfg or SsmConfig()
    origin, heading = _anchor(track_a, track_b)
    occ_a = _occupancy(track_a.obb, track_a.t, origin, heading, cfg.pet_cell)
    occ_b = _occupancy(track_b.obb, track_b.t, origin, heading, cfg.pet_cell)
    best = math.inf
    for key in occ_a.keys() & occ_b.keys():
        (ea, xa), (eb, xb) = occ_a[key], occ_b[key]
        if ea <= eb:
            pet = max(eb - xa, 0.0)
        else:
            pet = max(ea - xb, 0.0)
        best = min(best, pet)
    if best > cfg.pet_max:
        return None
    return float(best)


# ---------------------------------------------------------------------------
# series and events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SsmSeries:
    """Per-frame measures over an event plus episode scalars.

    ``None`` marks frames where a measure is undefined. ``contact`` marks
    frames where the footprints already overlap; the TTC there is zero and is
    stored as absent so that every stored time stays positive.
    """

    frames: tuple[int, ...]
    ttc_1d: tuple[float | None, ...]
    ttc_2d: tuple[float | None, ...]
    drac: tuple[float | None, ...]
    drac_capped: tuple[bool, ...]
    cai: tuple[float | None, ...]
    contact: tuple[bool, ...]
    pet: float | None = None
    tet: float = 0.0
    tit: float = 0.0

    def min_ttc_2d(self) -> float | None:
        vals = [0.0 if c else v for v, c in zip(self.ttc_2d, self.contact) if c or v is not None]
        return min(vals) if vals else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "frames": list(self.frames), "ttc_1d": list(self.ttc_1d), "ttc_2d": list(self.ttc_2d),
            "drac": list(self.drac), "drac_capped": list(self.drac_capped), "cai": list(self.cai),
            "contact": list(self.contact), "pet": self.pet, "tet": self.tet, "tit": self.tit,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SsmSeries":
        return cls(frames=tuple(int(f) for f in d["frames"]), ttc_1d=tuple(d["ttc_1d"]),
                   ttc_2d=tuple(d["ttc_2d"]), drac=tuple(d["drac"]),
                   drac_capped=tuple(bool(v) for v in d["drac_capped"]), cai=tuple(d["cai"]),
                   contact=tuple(bool(v) for v in d["contact"]), pet=d.get("pet"),
                   tet=float(d["tet"]), tit=float(d["tit"]))


def severity_level(min_ttc_2d: float | None, thresholds: dict[str, Any]) -> int:
    """Severity from the minimum 2D TTC. Events raised by DRAC alone get level 1."""
    if min_ttc_2d is None:
        return 1
    if min_ttc_2d < thresholds["severity_level3"]:
        return 3
    if min_ttc_2d < thresholds["severity_level2"]:
        return 2
    return 1


@dataclass(frozen=True)
class RiskyEvent:
    event_id: str
    conflict_type: str
    severity: int
    track_ids: tuple[str, str]
    onset_frame: int
    min_instant_frame: int
    resolution_frame: int
    ssm: SsmSeries
    thresholds_used: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.conflict_type not in CONFLICT_TYPES:
            raise ValueError(f"unknown conflict type {self.conflict_type!r}")
        if self.severity not in (1, 2, 3):
            raise ValueError(f"severity must be 1, 2 or 3, got {self.severity}")
        if not self.onset_frame <= self.min_instant_frame <= self.resolution_frame:
            raise ValueError("event markers out of order")

    def recomputed_severity(self) -> int:
        return severity_level(self.ssm.min_ttc_2d(), self.thresholds_used)

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id, "conflict_type": self.conflict_type,
            "severity": self.severity, "track_ids": list(self.track_ids),
            "onset_frame": self.onset_frame, "min_instant_frame": self.min_instant_frame,
            "resolution_frame": self.resolution_frame, "ssm": self.ssm.to_dict(),
            "thresholds_used": dict(self.thresholds_used),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RiskyEvent":
        return cls(event_id=str(d["event_id"]), conflict_type=d["conflict_type"],
                   severity=int(d["severity"]), track_ids=tuple(d["track_ids"]),
                   onset_frame=int(d["onset_frame"]), min_instant_frame=int(d["min_instant_frame"]),
                   resolution_frame=int(d["resolution_frame"]), ssm=SsmSeries.from_dict(d["ssm"]),
                   thresholds_used=dict(d["thresholds_used"]))


def _velocities(tr: Track) -> np.ndarray:
    return np.stack([tr.speed * np.cos(tr.heading), tr.speed * np.sin(tr.heading)], axis=1)


@dataclass
class _PairSeries:
    frames: np.ndarray
    ttc_1d: list
    ttc_2d: np.ndarray
    drac: list
    capped: list
    cai: list
    contact: np.ndarray
    ia: np.ndarray
    ib: np.ndarray


def _pair_series(a: Track, b: Track, frames: np.ndarray, cfg: SsmConfig) -> _PairSeries:
    ia = np.searchsorted(a.frame, frames)
    ib = np.searchsorted(b.frame, frames)
    va, vb = _velocities(a), _velocities(b)
    ttc2 = swept_collision_time_batch(a.obb[ia], va[ia], b.obb[ib], vb[ib])
    contact = ttc2 == 0.0
    ttc1, drac, capped, cai = [], [], [], []
    for k in range(len(frames)):
        pair = PairFrame(int(frames[k]), a.obb[ia[k]], b.obb[ib[k]], va[ia[k]], vb[ib[k]], 0.0)
        heading = _follower_heading(pair, float(a.heading[ia[k]]), float(b.heading[ib[k]]))
        t1 = compute_ttc_1d(pair, heading)
        d, cap = compute_drac(pair, heading, cfg.drac_cap)
        ttc1.append(t1 if t1 is not None and t1 > 0 else None)
        drac.append(d)
        capped.append(cap)
        cai.append(None if d is None else compute_cai(d, cfg.madr))
    return _PairSeries(frames, ttc1, ttc2, drac, capped, cai, contact, ia, ib)


def _follower_heading(pair: PairFrame, ha: float, hb: float) -> float:
    """Heading of the agent that has the other ahead of it (``a`` on ties)."""
    ca, cb = pair.obb_a.mean(axis=0), pair.obb_b.mean(axis=0)
    if (cb - ca) @ _unit(ha) > 0:
        return ha
    if (ca - cb) @ _unit(hb) > 0:
        return hb
    return ha


def _runs(mask: np.ndarray, frames: np.ndarray) -> list[tuple[int, int]]:
    """Index ranges [i, j] of maximal runs of True over consecutive frames."""
    out = []
    i = 0
    n = len(mask)
    while i < n:
        if not mask[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and mask[j + 1] and frames[j + 1] == frames[j] + 1:
            j += 1
        out.append((i, j))
        i = j + 1
    return out


def _paths_cross(pa: np.ndarray, pb: np.ndarray) -> bool:
    """True if two polylines share a point (proper or touching crossing)."""
    if len(pa) < 2 or len(pb) < 2:
        return False
    p1, p2 = pa[:-1, None, :], pa[1:, None, :]
    q1, q2 = pb[None, :-1, :], pb[None, 1:, :]

    def orient(o, p, q):
        return (p[..., 0] - o[..., 0]) * (q[..., 1] - o[..., 1]) - \
               (p[..., 1] - o[..., 1]) * (q[..., 0] - o[..., 0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return bool(np.any((d1 * d2 <= 0) & (d3 * d4 <= 0)))


def _center_path(tr: Track, idx: np.ndarray, k_min: int, horizon: float, dt: float) -> np.ndarray:
    """Observed centres over the event followed by constant-velocity
    extrapolation from the minimum instant."""
    obs = np.stack([tr.x[idx], tr.y[idx]], axis=1)
    v = np.array([tr.speed[k_min] * math.cos(tr.heading[k_min]),
                  tr.speed[k_min] * math.sin(tr.heading[k_min])])
    steps = np.arange(1, int(round(horizon / dt)) + 1)[:, None] * dt
    ext = np.array([tr.x[k_min], tr.y[k_min]]) + steps * v
    return np.vstack([obs, ext])


def classify_conflict(dtheta_deg: float, paths_cross: bool, cfg: SsmConfig) -> str:
    if dtheta_deg < cfg.rear_end_max_deg:
        return "rear_end"
    if dtheta_deg > cfg.head_on_min_deg:
        return "head_on"
    return "angle" if paths_cross else "sideswipe"


def _events_for_pair(a: Track, b: Track, frames: np.ndarray, cfg: SsmConfig,
                     dt: float) -> list[RiskyEvent]:
    ps = _pair_series(a, b, frames, cfg)
    ttc_eff = np.where(ps.contact, 0.0, ps.ttc_2d)
    drac = np.array([np.nan if d is None else d for d in ps.drac])
    with np.errstate(invalid="ignore"):
        hot = (ttc_eff < cfg.event_ttc_threshold) | (drac > cfg.madr)
    events = []
    thresholds = cfg.to_dict()
    for i, j in _runs(hot, frames):
        seg = slice(i, j + 1)
        ttc_seg = ttc_eff[seg]
        if np.isfinite(ttc_seg).any():
            k = i + int(np.nanargmin(ttc_seg))
        else:
            k = i + int(np.nanargmax(drac[seg]))
        ka, kb = int(ps.ia[k]), int(ps.ib[k])
        dtheta = abs(math.degrees(float(normalize_angle(a.heading[ka] - b.heading[kb]))))
        crossing = _paths_cross(
            _center_path(a, ps.ia[seg], ka, cfg.event_ttc_threshold, dt),
            _center_path(b, ps.ib[seg], kb, cfg.event_ttc_threshold, dt))
        ttc2 = tuple(None if (c or not np.isfinite(v)) else float(v)
                     for v, c in zip(ps.ttc_2d[seg], ps.contact[seg]))
        contact = tuple(bool(c) for c in ps.contact[seg])
        tet, tit = compute_tet_tit([0.0 if c else v for v, c in zip(ttc2, contact)], dt,
                                   cfg.ttc_star)
        f0, f1 = int(frames[i]), int(frames[j])
        pad = int(round(cfg.pet_max / dt))
        pet = compute_pet(_window(a, f0 - pad, f1 + pad), _window(b, f0 - pad, f1 + pad), cfg)
        series = SsmSeries(frames=tuple(int(f) for f in frames[seg]), ttc_1d=tuple(ps.ttc_1d[seg]),
                           ttc_2d=ttc2, drac=tuple(ps.drac[seg]),
                           drac_capped=tuple(ps.capped[seg]), cai=tuple(ps.cai[seg]),
                           contact=contact, pet=pet, tet=tet, tit=tit)
        events.append(RiskyEvent(
            event_id="", conflict_type=classify_conflict(dtheta, crossing, cfg),
            severity=severity_level(series.min_ttc_2d(), thresholds),
            track_ids=(a.track_id, b.track_id), onset_frame=f0,
            min_instant_frame=int(frames[k]), resolution_frame=f1, ssm=series,
            thresholds_used=thresholds))
    return events


def _window(tr: Track, f0: int, f1: int) -> Track:
    lo, hi = np.searchsorted(tr.frame, [f0, f1 + 1])
    sl = slice(int(lo), int(hi))
    return tr.replace(frame=tr.frame[sl], t=tr.t[sl], x=tr.x[sl], y=tr.y[sl],
                      heading=tr.heading[sl], speed=tr.speed[sl], ax=tr.ax[sl], ay=tr.ay[sl],
                      obb=tr.obb[sl], pixel=None)


def candidate_frames(scene: CanonicalScene, radius: float) -> dict[tuple[int, int], np.ndarray]:
    """Frames at which each pair of tracks (by index) lies within ``radius``."""
    tracks = scene.tracks
    frames = np.concatenate([tr.frame for tr in tracks]) if tracks else np.zeros(0, np.int64)
    owner = np.concatenate([np.full(len(tr), i) for i, tr in enumerate(tracks)]) if tracks else frames
    xs = np.concatenate([tr.x for tr in tracks]) if tracks else np.zeros(0)
    ys = np.concatenate([tr.y for tr in tracks]) if tracks else np.zeros(0)
    order = np.argsort(frames, kind="stable")
    frames, owner, xs, ys = frames[order], owner[order], xs[order], ys[order]
    bounds = np.flatnonzero(np.diff(frames)) + 1
    out: dict[tuple[int, int], list[int]] = {}
    for lo, hi in zip(np.r_[0, bounds], np.r_[bounds, len(frames)]):
        if hi - lo < 2:
            continue
        f = int(frames[lo])
        for i, j in candidate_pairs(xs[lo:hi], ys[lo:hi], radius):
            a, b = int(owner[lo + i]), int(owner[lo + j])
            out.setdefault((min(a, b), max(a, b)), []).append(f)
    return {k: np.asarray(sorted(v), dtype=np.int64) for k, v in out.items()}


def _mine_chunk(args) -> list[RiskyEvent]:
    jobs, cfg, dt = args
    out = []
    for a, b, frames in jobs:
        out.extend(_events_for_pair(a, b, frames, cfg, dt))
    return out



def mine_events(scene: CanonicalScene, cfg: SsmConfig | None = None, jobs: int = 1) -> list[RiskyEvent]:
    """Risky events for every pair of agents that come within ``pair_radius``.

    Output is ordered by (onset frame, track ids) and does not depend on
    ``jobs``.
    """
    cfg = cfg or SsmConfig()
    report = compute_coverage(scene)
    missing = [name for name, ok in report.presence.items() if not ok]
    if missing:
        raise PreconditionError(f"scene is not completed; missing fields: {', '.join(missing)}")
    dt = scene.metadata.dt
    tracks = sorted(scene.tracks, key=lambda tr: track_sort_key(tr.track_id))
    ordered = CanonicalScene(scene.metadata, tuple(tracks))
    pairs = candidate_frames(ordered, cfg.pair_radius)
    work = [(tracks[i], tracks[j], fr) for (i, j), fr in sorted(pairs.items())]
    if jobs > 1 and len(work) > 1:
        chunks = [work[k::jobs] for k in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_mine_chunk, [(c, cfg, dt) for c in chunks if c]))
        events = [ev for chunk in results for ev in chunk]
    else:
        events = _mine_chunk((work, cfg, dt))
    events.sort(key=lambda ev: (ev.onset_frame, track_sort_key(ev.track_ids[0]),
                                track_sort_key(ev.track_ids[1])))
    out = []
    for n, ev in enumerate(events, start=1):
        out.append(RiskyEvent(**{**{f.name: getattr(ev, f.name) for f in fields(ev)},
                                 "event_id": f"{scene.metadata.scene_id}-e{n:05d}"}))
    log.info("mined %d events from %d candidate pairs", len(out), len(work))
    return out


def pair_ttc_2d(a: Track, b: Track, frame: int) -> float | None:
    """2D TTC of two tracks at one frame (convenience for inspection)."""
    ia = int(np.searchsorted(a.frame, frame))
    ib = int(np.searchsorted(b.frame, frame))
    return swept_collision_time(a.obb[ia], _velocities(a)[ia], b.obb[ib], _velocities(b)[ib])
