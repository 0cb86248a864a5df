"""Canonical scene model, validation and mandatory-field coverage.

Per-state quantities are stored column-wise as numpy arrays on each
:class:`Track` (NaN marks a missing value); :meth:`Track.state` gives the
row view. Units are fixed: meters, seconds, radians, m/s, m/s^2.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, NamedTuple

import numpy as np

from .errors import ConfigurationError
from .geometry import obb_corners

SCHEMA_VERSION = "1.0"

CAPTURE_MODALITIES = ("uav", "roadside_camera", "invehicle", "probe", "synthetic")
AGENT_TYPES = ("car", "truck", "bus", "motorcycle", "bicycle", "pedestrian", "unknown")
VEHICLE_TYPES = frozenset({"car", "truck", "bus", "motorcycle"})
PROVENANCE_VALUES = ("measured", "derived", "missing")

# Every canonical field carries exactly one provenance entry per scene.
CANONICAL_FIELDS = (
    "track_id",
    "frame_timestamp",
    "position_xy",
    "heading",
    "speed",
    "acceleration_2d",
    "obb_corners",
    "length",
    "width",
    "agent_type",
    "metric_coordinate_calibration",
    "pixel_xy",
)

OBB_TOL = 1e-6
T_TOL = 1e-9


def normalize_angle(a):
    """Wrap angles into [-pi, pi)."""
    w = (np.asarray(a, dtype=float) + math.pi) % (2 * math.pi) - math.pi
    return np.where(w >= math.pi, -math.pi, w)


@dataclass(frozen=True)
class SceneMetadata:
    scene_id: str
    dataset_name: str
    frame_rate: float
    field_provenance: dict[str, str]
    coordinate_frame: dict[str, Any] = field(default_factory=lambda: {
        "origin": "unspecified", "axes": "x right, y up; heading ccw from +x",
        "units": "m", "calibration": None})
    capture_modality: str = "synthetic"
    converter_provenance: dict[str, Any] = field(default_factory=dict)
    location: tuple[float, float] | None = None
    site_reference: str = ""
    schema_version: str = SCHEMA_VERSION

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate

    def with_provenance(self, **changes: str) -> "SceneMetadata":
        prov = dict(self.field_provenance)
        prov.update(changes)
        return dataclasses.replace(self, field_provenance=prov)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "dataset_name": self.dataset_name,
            "scene_id": self.scene_id,
            "location": None if self.location is None else
            {"lat": self.location[0], "lon": self.location[1]},
            "site_reference": self.site_reference,
            "frame_rate": self.frame_rate,
            "coordinate_frame": self.coordinate_frame,
            "capture_modality": self.capture_modality,
            "field_provenance": {k: self.field_provenance[k] for k in sorted(self.field_provenance)},
            "converter_provenance": self.converter_provenance,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SceneMetadata":
        loc = d.get("location")
        return cls(
            scene_id=str(d["scene_id"]),
            dataset_name=str(d["dataset_name"]),
            frame_rate=float(d["frame_rate"]),
            field_provenance=dict(d["field_provenance"]),
            coordinate_frame=dict(d.get("coordinate_frame") or {}),
            capture_modality=str(d.get("capture_modality", "synthetic")),
            converter_provenance=dict(d.get("converter_provenance") or {}),
            location=None if loc is None else (float(loc["lat"]), float(loc["lon"])),
            site_reference=str(d.get("site_reference", "")),
            schema_version=str(d.get("schema_version", SCHEMA_VERSION)),
        )


def default_provenance(value: str = "missing") -> dict[str, str]:
    return {name: value for name in CANONICAL_FIELDS}


class TrackState(NamedTuple):
    frame: int
    t: float
    x: float
    y: float
    heading: float
    speed: float
    ax: float
    ay: float
    obb: tuple[tuple[float, float], ...]
    pixel_xy: tuple[float, float] | None


_ARRAY_FIELDS = ("frame", "t", "x", "y", "heading", "speed", "ax", "ay")


@dataclass(frozen=True, eq=False)
class Track:
    """One agent's time-ordered states. Arrays are read-only after construction."""

    track_id: str
    agent_type: str | None
    length: float
    width: float
    frame: np.ndarray
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    speed: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    obb: np.ndarray
    pixel: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.frame)
        for name in _ARRAY_FIELDS:
            dtype = np.int64 if name == "frame" else float
            arr = np.array(getattr(self, name), dtype=dtype)
            if arr.shape != (n,):
                raise ValueError(f"track {self.track_id}: {name} has shape {arr.shape}, expected ({n},)")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        obb = np.array(self.obb, dtype=float).reshape(n, 4, 2)
        obb.flags.writeable = False
        object.__setattr__(self, "obb", obb)
        if self.pixel is not None:
            px = np.array(self.pixel, dtype=float).reshape(n, 2)
            px.flags.writeable = False
            object.__setattr__(self, "pixel", px)
        object.__setattr__(self, "length", float(self.length))
        object.__setattr__(self, "width", float(self.width))

    @classmethod
    def from_positions(cls, track_id: str, frame, frame_rate: float, x, y, *,
                       agent_type: str | None = "car", length: float = 4.5,
                       width: float = 1.8, **arrays) -> "Track":
        """Build a track with every unspecified per-state field missing."""
        frame = np.asarray(frame, dtype=np.int64)
        n = len(frame)
        nan = np.full(n, np.nan)
        kw = {name: arrays.get(name, nan) for name in ("heading", "speed", "ax", "ay")}
        return cls(track_id=track_id, agent_type=agent_type, length=length, width=width,
                   frame=frame, t=frame / frame_rate, x=x, y=y,
                   obb=arrays.get("obb", np.full((n, 4, 2), np.nan)),
                   pixel=arrays.get("pixel"), **kw)

    def __len__(self) -> int:
        return len(self.frame)

    def replace(self, **changes) -> "Track":
        return dataclasses.replace(self, **changes)

    def state(self, i: int) -> TrackState:
        px = None if self.pixel is None else (float(self.pixel[i, 0]), float(self.pixel[i, 1]))
        return TrackState(int(self.frame[i]), float(self.t[i]), float(self.x[i]), float(self.y[i]),
                          float(self.heading[i]), float(self.speed[i]), float(self.ax[i]),
                          float(self.ay[i]), tuple(map(tuple, self.obb[i].tolist())), px)

    def states(self):
        return (self.state(i) for i in range(len(self)))


@dataclass(frozen=True, eq=False)
class CanonicalScene:
    metadata: SceneMetadata
    tracks: tuple[Track, ...]
    events: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "tracks", tuple(self.tracks))
        if self.events is not None:
            object.__setattr__(self, "events", tuple(self.events))

    @property
    def n_states(self) -> int:
        return sum(len(t) for t in self.tracks)

    def track(self, track_id: str) -> Track:
        for tr in self.tracks:
            if tr.track_id == track_id:
                return tr
        raise KeyError(track_id)

    def replace(self, **changes) -> "CanonicalScene":
        return dataclasses.replace(self, **changes)


def track_sort_key(track_id: str):
    """Natural ordering: numeric ids numerically, then the rest lexically."""
    try:
        return (0, float(track_id), track_id)
    except ValueError:
        return (1, 0.0, track_id)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str
    location: str
    message: str


def _track_violations(tr: Track, meta: SceneMetadata) -> list[Violation]:
    out: list[Violation] = []
    loc = f"track {tr.track_id}"
    prov = meta.field_provenance
    n = len(tr)
    if n == 0:
        out.append(Violation("empty track", loc, "track has no states"))
        return out
    steps = np.diff(tr.frame)
    if np.any(tr.frame < 0):
        out.append(Violation("negative frame", loc, "frame numbers must be nonnegative"))
    for i in np.flatnonzero(steps != 1):
        out.append(Violation("non-contiguous frames", f"{loc} frame {int(tr.frame[i + 1])}",
                             f"frame step {int(steps[i])} after frame {int(tr.frame[i])}"))
    t_expected = tr.frame / meta.frame_rate
    bad_t = np.flatnonzero(~(np.abs(tr.t - t_expected) <= T_TOL))
    if bad_t.size:
        out.append(Violation("timestamp mismatch", f"{loc} frame {int(tr.frame[bad_t[0]])}",
                             f"{bad_t.size} states with t != frame / frame_rate"))
    if not (np.all(np.isfinite(tr.x)) and np.all(np.isfinite(tr.y))):
        out.append(Violation("non-finite position", loc, "x and y must be finite"))
    if not (tr.length > 0 and tr.width > 0) and prov.get("length") != "missing":
        out.append(Violation("bad dimensions", loc, f"length={tr.length} width={tr.width}"))
    if tr.agent_type in VEHICLE_TYPES and tr.length < tr.width:
        out.append(Violation("length < width", loc, f"length={tr.length} width={tr.width}"))
    if tr.agent_type is not None and tr.agent_type not in AGENT_TYPES:
        out.append(Violation("bad agent type", loc, repr(tr.agent_type)))

    if prov.get("heading") != "missing":
        h = tr.heading
        if np.any(np.isnan(h)):
            out.append(Violation("heading NaN", loc, "heading is never NaN when provided"))
        elif np.any((h < -math.pi) | (h >= math.pi)):
            out.append(Violation("heading range", loc, "heading outside [-pi, pi)"))
        elif prov.get("speed") != "missing" and np.all(np.isfinite(tr.speed)):
            moving = tr.speed != 0
            if moving.any() and not moving.all():
                idx = np.where(moving, np.arange(n), -1)
                last = np.maximum.accumulate(idx)
                check = (~moving) & (last >= 0)
                if np.any(h[check] != h[last[check]]):
                    out.append(Violation("stationary heading", loc,
                                         "stopped states must keep the last moving heading"))
    if prov.get("speed") != "missing" and np.any(tr.speed < 0):
        out.append(Violation("negative speed", loc, "speed must be >= 0"))
    if prov.get("obb_corners") == "derived":
        ref = obb_corners(tr.x, tr.y, tr.heading, tr.length, tr.width)
        err = np.abs(tr.obb - ref).max(axis=(1, 2))
        bad = np.flatnonzero(~(err <= OBB_TOL))
        if bad.size:
            out.append(Violation("obb mismatch", f"{loc} frame {int(tr.frame[bad[0]])}",
                                 f"{bad.size} states with corners off by up to {np.nanmax(err):.3g} m"))
    return out


def validate_scene(scene: CanonicalScene, strict: bool = False,
                   catalog: "FieldCatalog | None" = None) -> list[Violation]:
    """Return every invariant violation; an empty list means the scene is valid.

    Strict mode also requires non-missing provenance for each field of the
    mandatory catalog.
    """
    meta = scene.metadata
    out: list[Violation] = []
    if not (meta.frame_rate > 0 and math.isfinite(meta.frame_rate)):
        out.append(Violation("frame rate", "metadata", f"frame_rate={meta.frame_rate}"))
        return out
    if meta.location is not None:
        lat, lon = meta.location
        if not (-90 <= lat <= 90 and -180 <= lon <= 180):
            out.append(Violation("location range", "metadata", f"lat={lat} lon={lon}"))
    if meta.capture_modality not in CAPTURE_MODALITIES:
        out.append(Violation("capture modality", "metadata", repr(meta.capture_modality)))
    prov = meta.field_provenance
    missing = [f for f in CANONICAL_FIELDS if f not in prov]
    extra = [f for f in prov if f not in CANONICAL_FIELDS]
    if missing or extra:
        out.append(Violation("field provenance", "metadata",
                             f"missing={missing} unknown={extra}"))
    bad_values = sorted(k for k, v in prov.items() if v not in PROVENANCE_VALUES)
    if bad_values:
        out.append(Violation("field provenance", "metadata", f"bad values for {bad_values}"))
    seen: set[str] = set()
    for tr in scene.tracks:
        if tr.track_id in seen:
            out.append(Violation("duplicate track id", f"track {tr.track_id}", "track ids must be unique"))
        seen.add(tr.track_id)
        out.extend(_track_violations(tr, meta))
    if strict:
        catalog = catalog or default_catalog()
        for name in catalog.names:
            if prov.get(name, "missing") == "missing":
                out.append(Violation("strict provenance", "metadata", f"{name} is missing"))
    return out


# ---------------------------------------------------------------------------
# coverage
# ---------------------------------------------------------------------------

def _per_state_fraction(scene: CanonicalScene, getter: Callable[[Track], np.ndarray]) -> float:
    total = scene.n_states
    if total == 0:
        return 1.0
    ok = 0
    for tr in scene.tracks:
        ok += int(np.count_nonzero(getter(tr)))
    return ok / total


def _finite(*names: str):
    def getter(tr: Track):
        m = np.ones(len(tr), dtype=bool)
        for name in names:
            m &= np.isfinite(getattr(tr, name))
        return m
    return getter


def _obb_ok(tr: Track):
    return np.all(np.isfinite(tr.obb), axis=(1, 2))


def _track_scalar(pred: Callable[[Track], bool]):
    def getter(tr: Track):
        return np.full(len(tr), bool(pred(tr)))
    return getter


def _calibration_present(scene: CanonicalScene) -> bool:
    frame = scene.metadata.coordinate_frame
    return frame.get("units") == "m" and bool(frame.get("calibration"))


# field name -> per-state predicate (None for scene-level checks)
_STATE_GETTERS: dict[str, Callable[[Track], np.ndarray]] = {
    "track_id": _track_scalar(lambda tr: bool(tr.track_id)),
    "frame_timestamp": _finite("t"),
    "position_xy": _finite("x", "y"),
    "heading": _finite("heading"),
    "speed": _finite("speed"),
    "acceleration_2d": _finite("ax", "ay"),
    "obb_corners": _obb_ok,
    "length": _track_scalar(lambda tr: math.isfinite(tr.length) and tr.length > 0),
    "width": _track_scalar(lambda tr: math.isfinite(tr.width) and tr.width > 0),
    "agent_type": _track_scalar(lambda tr: tr.agent_type in AGENT_TYPES),
    "pixel_xy": lambda tr: (np.zeros(len(tr), bool) if tr.pixel is None
                            else np.all(np.isfinite(tr.pixel), axis=1)),
}
_SCENE_PREDICATES = {"metric_coordinate_calibration": _calibration_present}
KNOWN_FIELDS = frozenset(_STATE_GETTERS) | frozenset(_SCENE_PREDICATES)


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    min_fraction: float = 0.99


@dataclass(frozen=True)
class FieldCatalog:
    entries: tuple[CatalogEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.entries:
            raise ConfigurationError("field catalog is empty")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ConfigurationError("field catalog has duplicate names")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    @classmethod
    def from_dict(cls, d: dict) -> "FieldCatalog":
        entries = []
        for item in d["fields"]:
            if isinstance(item, str):
                entries.append(CatalogEntry(item))
            else:
                entries.append(CatalogEntry(item["name"], float(item.get("min_fraction", 0.99))))
        return cls(tuple(entries))

    @classmethod
    def load(cls, path: str | Path) -> "FieldCatalog":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def default_catalog() -> FieldCatalog:
    text = resources.files("trajstd.data").joinpath("default_catalog.json").read_text("utf-8")
    return FieldCatalog.from_dict(json.loads(text))


@dataclass(frozen=True)
class CoverageReport:
    ratio: float
    presence: dict[str, bool]
    fractions: dict[str, float]


def compute_coverage(scene: CanonicalScene, catalog: FieldCatalog | None = None) -> CoverageReport:
    """Fraction of catalog fields whose presence predicate holds.

    A field is present when its provenance is not ``missing`` and, for
    per-state fields, at least ``min_fraction`` of states carry a value.
    """
    catalog = catalog or default_catalog()
    unknown = [n for n in catalog.names if n not in KNOWN_FIELDS]
    if unknown:
        raise ConfigurationError(f"unknown catalog fields: {unknown}")
    prov = scene.metadata.field_provenance
    presence: dict[str, bool] = {}
    fractions: dict[str, float] = {}
    for entry in catalog.entries:
        declared = prov.get(entry.name, "missing") != "missing"
        if entry.name in _SCENE_PREDICATES:
            frac = 1.0 if _SCENE_PREDICATES[entry.name](scene) else 0.0
        else:
            frac = _per_state_fraction(scene, _STATE_GETTERS[entry.name])
        fractions[entry.name] = frac if declared else 0.0
        presence[entry.name] = declared and frac >= entry.min_fraction
    ratio = sum(presence.values()) / len(catalog.entries)
    return CoverageReport(ratio, presence, fractions)
