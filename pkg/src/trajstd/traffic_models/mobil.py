"""MOBIL lane-change decisions evaluated against observed lane changes.

Lane geometry comes from a minimal lane map: a longitudinal axis, an origin
and lanes given as lateral intervals. Every agent is assumed to travel along
the positive axis direction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, PreconditionError
from ..schema import CanonicalScene, track_sort_key
from .idm import IdmParams, idm_acceleration

MOBIL_BOUNDS = {"p": (0.0, 1.0), "delta_a_th": (0.0, 5.0), "b_safe": (0.1, 10.0)}


@dataclass(frozen=True)
class MobilParams:
    p: float = 0.5
    delta_a_th: float = 0.2
    b_safe: float = 4.0

    def __post_init__(self):
        out = [f"{n}={getattr(self, n)} not in [{lo}, {hi}]" for n, (lo, hi) in MOBIL_BOUNDS.items()
               if not lo <= getattr(self, n) <= hi]
        if out:
            raise ConfigurationError("MOBIL parameters out of bounds: " + "; ".join(out))

    def to_dict(self) -> dict[str, float]:
        return {"p": self.p, "delta_a_th": self.delta_a_th, "b_safe": self.b_safe}


@dataclass(frozen=True)
class Lane:
    lane_id: int
    lateral_min: float
    lateral_max: float


@dataclass(frozen=True)
class LaneMap:
    origin: tuple[float, float]
    axis: tuple[float, float]
    lanes: tuple[Lane, ...]

    def __post_init__(self):
        n = math.hypot(*self.axis)
        if not n > 0:
            raise ConfigurationError("lane map axis must be nonzero")
        object.__setattr__(self, "axis", (self.axis[0] / n, self.axis[1] / n))
        lanes = tuple(sorted(self.lanes, key=lambda ln: ln.lateral_min))
        if not lanes:
            raise ConfigurationError("lane map has no lanes")
        for a, b in zip(lanes, lanes[1:]):
            if b.lateral_min < a.lateral_max:
                raise ConfigurationError(f"lanes {a.lane_id} and {b.lane_id} overlap")
        object.__setattr__(self, "lanes", lanes)

    @classmethod
    def from_dict(cls, d: dict) -> "LaneMap":
        try:
            lanes = tuple(Lane(int(ln["id"]), float(ln["lateral_min"]), float(ln["lateral_max"]))
                          for ln in d["lanes"])
            return cls(tuple(d.get("origin", (0.0, 0.0))), tuple(d.get("axis", (1.0, 0.0))), lanes)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid lane map: {exc!r}") from None

    @classmethod
    def load(cls, path: str | Path) -> "LaneMap":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "axis": list(self.axis),
                "lanes": [{"id": ln.lane_id, "lateral_min": ln.lateral_min,
                           "lateral_max": ln.lateral_max} for ln in self.lanes]}

    def project(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Longitudinal and lateral coordinates."""
        dx = np.asarray(x, dtype=float) - self.origin[0]
        dy = np.asarray(y, dtype=float) - self.origin[1]
        ux, uy = self.axis
        return dx * ux + dy * uy, -dx * uy + dy * ux

    def assign(self, x, y) -> np.ndarray:
        """Lane index (position in ``lanes``) per point, -1 when off the map."""
        _, lat = self.project(x, y)
        out = np.full(np.shape(lat), -1, dtype=int)
        for i, ln in enumerate(self.lanes):
            out[(lat >= ln.lateral_min) & (lat < ln.lateral_max)] = i
        return out


def mobil_decide(a_c: float, a_c_new: float, a_o: float, a_o_new: float, a_n: float,
                 a_n_new: float, params: MobilParams) -> bool:
    """Incentive plus safety criterion.

    ``a_c``/``a_c_new``: ego now / after the change; ``a_o``/``a_o_new``: old
    follower; ``a_n``/``a_n_new``: new follower.
    """
    if a_n_new < -params.b_safe:
        return False
    return a_c_new - a_c > params.p * ((a_o - a_o_new) + (a_n - a_n_new)) + params.delta_a_th


@dataclass(frozen=True)
class _Agent:
    s: float
    v: float
    length: float


def _gap(back: _Agent, front: _Agent) -> float:
    return front.s - back.s - 0.5 * (front.length + back.length)


def _acc(me: _Agent | None, leader: _Agent | None, cf: IdmParams) -> float:
    if me is None:
        return 0.0
    if leader is None:
        return idm_acceleration(me.v, 0.0, math.inf, cf)
    return idm_acceleration(me.v, me.v - leader.v, max(_gap(me, leader), 1e-3), cf)


def _neighbours(lane_agents: list[_Agent], s: float, exclude: _Agent | None = None):
    """Nearest agent ahead and behind ``s`` in a lane (sorted by s)."""
    ahead = behind = None
    for ag in lane_agents:
        if ag is exclude:
            continue
        if ag.s > s and (ahead is None or ag.s < ahead.s):
            ahead = ag
        elif ag.s <= s and (behind is None or ag.s > behind.s):
            behind = ag
    return ahead, behind


def lane_change_incentive(ego: _Agent, cur: list[_Agent], target: list[_Agent], cf: IdmParams,
                          mp: MobilParams) -> tuple[bool, float]:
    lead, old_f = _neighbours(cur, ego.s, exclude=ego)
    new_lead, new_f = _neighbours(target, ego.s)
    a_c = _acc(ego, lead, cf)
    a_c_new = _acc(ego, new_lead, cf)
    a_o = _acc(old_f, ego, cf)
    a_o_new = _acc(old_f, lead, cf)
    a_n = _acc(new_f, new_lead, cf)
    a_n_new = _acc(new_f, ego, cf)
    if new_f is not None and _gap(new_f, ego) <= 0:
        return False, -math.inf
    if new_lead is not None and _gap(ego, new_lead) <= 0:
        return False, -math.inf
    gain = a_c_new - a_c - mp.p * ((a_o - a_o_new) + (a_n - a_n_new))
    return mobil_decide(a_c, a_c_new, a_o, a_o_new, a_n, a_n_new, mp), gain


@dataclass(frozen=True)
class MobilDecision:
    track_id: str
    frame: int
    from_lane: int
    to_lane: int


@dataclass(frozen=True)
class MobilEvaluation:
    decisions: tuple[MobilDecision, ...]
    observed: tuple[tuple[str, int], ...]
    true_positive: int
    false_positive: int
    false_negative: int
    precision: float | None
    recall: float | None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"true_positive": self.true_positive, "false_positive": self.false_positive,
                "false_negative": self.false_negative, "precision": self.precision,
                "recall": self.recall, "n_decisions": len(self.decisions),
                "n_observed": len(self.observed)}


def _episodes(frames: list[int]) -> list[tuple[int, int]]:
    out = []
    for f in frames:
        if out and f == out[-1][1] + 1:
            out[-1] = (out[-1][0], f)
        else:
            out.append((f, f))
    return out


def evaluate_mobil(scene: CanonicalScene, lane_map: LaneMap | None, cf: IdmParams,
                   mp: MobilParams, tolerance_s: float = 1.0) -> MobilEvaluation:
    """Per-frame MOBIL decisions compared with observed lane changes.

    Consecutive decision frames of one track form one decision episode. An
    episode is a true positive when an observed change of that track lies
    within ``tolerance_s`` of it; an observed change is recalled when any
    decision frame lies within ``tolerance_s`` of it.
    """
    if lane_map is None:
        lm = scene.metadata.converter_provenance.get("lane_map")
        if lm is None:
            raise PreconditionError("scene has no lane assignments; supply a lane map")
        lane_map = LaneMap.from_dict(lm)
    tracks = sorted(scene.tracks, key=lambda tr: track_sort_key(tr.track_id))
    lanes = {tr.track_id: lane_map.assign(tr.x, tr.y) for tr in tracks}
    if not any((ln >= 0).any() for ln in lanes.values()):
        raise PreconditionError("no agent lies on the lane map; lane assignments missing")
    tol = int(round(tolerance_s * scene.metadata.frame_rate))

    by_frame: dict[int, list[tuple[str, int, _Agent]]] = {}
    for tr in tracks:
        s, _ = lane_map.project(tr.x, tr.y)
        for k in range(len(tr)):
            ln = int(lanes[tr.track_id][k])
            if ln < 0:
                continue
            by_frame.setdefault(int(tr.frame[k]), []).append(
                (tr.track_id, ln, _Agent(float(s[k]), float(tr.speed[k]), tr.length)))

    decisions = []
    for f in sorted(by_frame):
        per_lane: dict[int, list[_Agent]] = {}
        for _, ln, ag in by_frame[f]:
            per_lane.setdefault(ln, []).append(ag)
        for tid, ln, ag in by_frame[f]:
            best = None
            for target in (ln - 1, ln + 1):
                if not 0 <= target < len(lane_map.lanes):
                    continue
                ok, gain = lane_change_incentive(ag, per_lane[ln], per_lane.get(target, []), cf, mp)
                if ok and (best is None or gain > best[1]):
                    best = (target, gain)
            if best is not None:
                decisions.append(MobilDecision(tid, f, lane_map.lanes[ln].lane_id,
                                               lane_map.lanes[best[0]].lane_id))

    observed = []
    for tr in tracks:
        ln = lanes[tr.track_id]
        for k in range(1, len(tr)):
            if ln[k] >= 0 and ln[k - 1] >= 0 and ln[k] != ln[k - 1]:
                observed.append((tr.track_id, int(tr.frame[k])))

    dec_frames: dict[str, list[int]] = {}
    for d in decisions:
        dec_frames.setdefault(d.track_id, []).append(d.frame)
    obs_frames: dict[str, list[int]] = {}
    for tid, f in observed:
        obs_frames.setdefault(tid, []).append(f)

    tp = fp = 0
    for tid, frames in dec_frames.items():
        obs = obs_frames.get(tid, [])
        for lo, hi in _episodes(frames):
            if any(lo - tol <= f <= hi + tol for f in obs):
                tp += 1
            else:
                fp += 1
    recalled = sum(1 for tid, f in observed
                   if any(abs(f - g) <= tol for g in dec_frames.get(tid, [])))
    fn = len(observed) - recalled
    precision = tp / (tp + fp) if tp + fp else None
    recall = recalled / len(observed) if observed else None
    return MobilEvaluation(tuple(decisions), tuple(observed), tp, fp, fn, precision, recall)
