"""Native dataset formats -> :class:`CanonicalScene`.

Every converter is a :class:`MappingSpec` run through one engine, so the
built-in NGSIM / highD / CitySim readers and user mapping files share unit
scaling, position and angle semantics, and provenance tagging. The module
also has exporters that write a canonical scene back into each native
layout; they exist for fixtures and round-trip checks.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, ParseError, SchemaError
from .schema import (AGENT_TYPES, CAPTURE_MODALITIES, CanonicalScene, SceneMetadata, Track,
                     default_provenance, normalize_angle, track_sort_key)

log = logging.getLogger(__name__)

CONVERTER_VERSION = "1.0.0"
FT = 0.3048
MPH = 0.44704
NGSIM_FRAME_RATE = 10.0
ERROR_BUDGET = 0.001

POSITION_SEMANTICS = ("center", "bbox_corner_upper_left", "front_bumper")
ANGLE_SEMANTICS = ("radians_ccw_x", "degrees_cw_north", "absent")
CORNER_KEYS = ("flx", "fly", "frx", "fry", "rrx", "rry", "rlx", "rly")
NUMERIC_KEYS = ("x", "y", "length", "width", "heading", "speed", "vx", "vy", "ax", "ay",
                *CORNER_KEYS, "px_x", "px_y")
CANONICAL_KEYS = ("track_id", "frame", "agent_type", *NUMERIC_KEYS)
REQUIRED_KEYS = ("track_id", "frame", "x", "y")


@dataclass(frozen=True)
class MappingSpec:
    """Declarative description of a native CSV layout."""

    dataset_name: str
    frame_rate: float
    columns: dict[str, str]
    multipliers: dict[str, float] = field(default_factory=dict)
    position_semantics: str = "center"
    angle_semantics: str = "absent"
    agent_type_codes: dict[str, str] = field(default_factory=dict)
    capture_modality: str = "synthetic"
    calibration: dict[str, Any] | None = None
    origin: str = "dataset native origin"
    axes: str = "x right, y up; heading ccw from +x"
    extra_required: tuple[str, ...] = ()

    def __post_init__(self):
        problems = []
        if not (self.frame_rate > 0 and math.isfinite(self.frame_rate)):
            problems.append(f"frame_rate must be positive, got {self.frame_rate}")
        targets = list(self.columns.values())
        unknown = sorted({t for t in targets if t not in CANONICAL_KEYS})
        if unknown:
            problems.append(f"unknown canonical fields {unknown}")
        dup = sorted({t for t in targets if targets.count(t) > 1})
        if dup:
            problems.append(f"canonical fields mapped more than once {dup}")
        missing = [k for k in REQUIRED_KEYS if k not in targets]
        if missing:
            problems.append(f"no column mapped to required fields {missing}")
        bad_mult = sorted(k for k, v in self.multipliers.items() if not (v > 0 and math.isfinite(v)))
        if bad_mult:
            problems.append(f"multipliers must be positive for {bad_mult}")
        if self.position_semantics not in POSITION_SEMANTICS:
            problems.append(f"unknown position semantics {self.position_semantics!r}")
        if self.angle_semantics not in ANGLE_SEMANTICS:
            problems.append(f"unknown angle semantics {self.angle_semantics!r}")
        if self.angle_semantics != "absent" and "heading" not in targets:
            problems.append("angle semantics given but no heading column mapped")
        if self.position_semantics == "bbox_corner_upper_left" and not {"length", "width"} <= set(targets):
            problems.append("bbox_corner_upper_left needs length and width columns")
        if self.capture_modality not in CAPTURE_MODALITIES:
            problems.append(f"unknown capture modality {self.capture_modality!r}")
        bad_codes = sorted(v for v in self.agent_type_codes.values() if v not in AGENT_TYPES)
        if bad_codes:
            problems.append(f"agent type codes map to unknown types {bad_codes}")
        if problems:
            raise ConfigurationError("invalid mapping spec: " + "; ".join(problems))

    @property
    def target_to_native(self) -> dict[str, str]:
        return {v: k for k, v in self.columns.items()}

    def multiplier(self, key: str) -> float:
        return float(self.multipliers.get(key, 1.0))

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset_name": self.dataset_name, "frame_rate": self.frame_rate,
            "columns": dict(self.columns), "multipliers": dict(self.multipliers),
            "position_semantics": self.position_semantics,
            "angle_semantics": self.angle_semantics,
            "agent_type_codes": dict(self.agent_type_codes),
            "capture_modality": self.capture_modality, "calibration": self.calibration,
            "origin": self.origin, "axes": self.axes,
            "extra_required": list(self.extra_required),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MappingSpec":
        try:
            return cls(
                dataset_name=str(d["dataset_name"]), frame_rate=float(d["frame_rate"]),
                columns=dict(d["columns"]), multipliers={k: float(v) for k, v in d.get("multipliers", {}).items()},
                position_semantics=d.get("position_semantics", "center"),
                angle_semantics=d.get("angle_semantics", "absent"),
                agent_type_codes={str(k): v for k, v in d.get("agent_type_codes", {}).items()},
                capture_modality=d.get("capture_modality", "synthetic"),
                calibration=d.get("calibration"), origin=d.get("origin", "dataset native origin"),
                axes=d.get("axes", "x right, y up; heading ccw from +x"),
                extra_required=tuple(d.get("extra_required", ())),
            )
        except KeyError as exc:
            raise ConfigurationError(f"mapping spec lacks key {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "MappingSpec":
        from .io import load_json

        return cls.from_dict(load_json(path))


def builtin_mapping(name: str) -> MappingSpec:
    """Bundled mapping files (currently ``ute``)."""
    try:
        text = resources.files("trajstd.data").joinpath(f"{name}_mapping.json").read_text("utf-8")
    except FileNotFoundError:
        raise ConfigurationError(f"no bundled mapping named {name!r}") from None
    return MappingSpec.from_dict(json.loads(text))


NGSIM_SPEC = MappingSpec(
    dataset_name="ngsim", frame_rate=NGSIM_FRAME_RATE,
    columns={"Vehicle_ID": "track_id", "Frame_ID": "frame", "Local_X": "x", "Local_Y": "y",
             "v_Length": "length", "v_Width": "width", "v_Class": "agent_type", "v_Vel": "speed"},
    multipliers={"x": FT, "y": FT, "length": FT, "width": FT, "speed": FT},
    position_semantics="front_bumper", angle_semantics="absent",
    agent_type_codes={"1": "motorcycle", "2": "car", "3": "truck"},
    capture_modality="roadside_camera",
    origin="study-section entry edge, left-most lane edge",
    axes="x = Local_X (lateral, right of travel), y = Local_Y (direction of travel)",
    extra_required=("v_Acc",),
)

HIGHD_SPEC = MappingSpec(
    dataset_name="highd", frame_rate=25.0,
    columns={"id": "track_id", "frame": "frame", "x": "x", "y": "y", "width": "length",
             "height": "width", "xVelocity": "vx", "yVelocity": "vy",
             "xAcceleration": "ax", "yAcceleration": "ay"},
    position_semantics="bbox_corner_upper_left", angle_semantics="absent",
    agent_type_codes={"Car": "car", "Truck": "truck", "Bus": "bus"},
    capture_modality="uav",
    calibration={"method": "native_metric", "note": "orthophoto-scaled meters"},
    origin="upper-left corner of the recording image",
    axes="x right, y down (image aligned)",
)

CITYSIM_SPEC = MappingSpec(
    dataset_name="citysim", frame_rate=30.0,
    columns={"carId": "track_id", "frameNum": "frame", "carCenterXft": "x", "carCenterYft": "y",
             "boundingBox1Xft": "flx", "boundingBox1Yft": "fly",
             "boundingBox2Xft": "frx", "boundingBox2Yft": "fry",
             "boundingBox3Xft": "rrx", "boundingBox3Yft": "rry",
             "boundingBox4Xft": "rlx", "boundingBox4Yft": "rly",
             "carCenterX": "px_x", "carCenterY": "px_y",
             "course": "heading", "speed": "speed"},
    multipliers={"x": FT, "y": FT, **{k: FT for k in CORNER_KEYS}, "speed": MPH},
    position_semantics="center", angle_semantics="degrees_cw_north",
    capture_modality="uav",
    calibration={"method": "paired_pixel_metric", "note": "per-state pixel and metric centers"},
    origin="site reference origin", axes="x east, y north; course clockwise from north",
)


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------

@dataclass
class _Table:
    file: str
    header: list[str]
    rows: list[list[str]]
    lines: list[int]


def _read_csv(path: Path) -> _Table:
    try:
        fh = open(path, encoding="utf-8", newline="")
    except FileNotFoundError:
        raise ParseError("file not found", file=str(path)) from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("file is empty", file=str(path), line=1)
        header = [h.strip() for h in header]
        rows, lines = [], []
        for row in reader:
            if row:
                rows.append(row)
                lines.append(reader.line_num)
    return _Table(str(path), header, rows, lines)


def _parse_column(raw: list[str], allow_empty: bool) -> tuple[np.ndarray, np.ndarray]:
    """Floats plus a mask of unparsable cells."""
    try:
        vals = np.array(raw, dtype=float)
        bad = ~np.isfinite(vals)
        return vals, bad
    except ValueError:
        pass
    vals = np.empty(len(raw))
    bad = np.zeros(len(raw), dtype=bool)
    for i, s in enumerate(raw):
        s = s.strip()
        if s == "" and allow_empty:
            vals[i] = math.nan
            continue
        try:
            vals[i] = float(s)
        except ValueError:
            vals[i] = math.nan
            bad[i] = True
            continue
        if not math.isfinite(vals[i]):
            bad[i] = True
    return vals, bad


def _quads_simple(c: np.ndarray) -> np.ndarray:
    """Vectorised simple-quadrilateral test for corners of shape (n, 4, 2)."""
    def orient(a, b, p):
        return (b[:, 0] - a[:, 0]) * (p[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (p[:, 0] - a[:, 0])

    def cross(p1, p2, p3, p4):
        return (orient(p3, p4, p1) * orient(p3, p4, p2) < 0) & (orient(p1, p2, p3) * orient(p1, p2, p4) < 0)

    xs, ys = c[..., 0], c[..., 1]
    area = 0.5 * (np.sum(xs * np.roll(ys, -1, axis=1), axis=1) - np.sum(ys * np.roll(xs, -1, axis=1), axis=1))
    ok = np.isfinite(area) & (np.abs(area) > 1e-12)
    p = [c[:, k] for k in range(4)]
    ok &= ~cross(p[0], p[1], p[2], p[3])
    ok &= ~cross(p[1], p[2], p[3], p[0])
    return ok


def _code_key(s: str) -> str:
    s = s.strip()
    try:
        f = float(s)
        if f.is_integer():
            return str(int(f))
    except ValueError:
        pass
    return s


def _convert_tables(tables: Sequence[_Table], spec: MappingSpec, scene_id: str,
                    agent_type_by_id: dict[str, str] | None, strict_schema: bool,
                    error_budget: float) -> CanonicalScene:
    t2n = spec.target_to_native
    needed = list(spec.columns) + list(spec.extra_required)
    ids: list[str] = []
    frames_l, lines_l, file_l = [], [], []
    cols: dict[str, list[np.ndarray]] = {k: [] for k in NUMERIC_KEYS if k in t2n}
    codes: list[str] = []
    errors: list[ParseError] = []
    total_rows = 0
    for tab in tables:
        index = {name: i for i, name in enumerate(tab.header)}
        unresolved = [c for c in needed if c not in index]
        if unresolved:
            if strict_schema:
                raise SchemaError(f"missing mandatory column {unresolved[0]!r}", file=tab.file,
                                  line=1, column=unresolved[0])
            raise ConfigurationError(f"{tab.file}: unresolved columns {unresolved}")
        width = len(tab.header)
        total_rows += len(tab.rows)
        ok_len = np.array([len(r) == width for r in tab.rows], dtype=bool)
        for k in np.flatnonzero(~ok_len):
            errors.append(ParseError(f"expected {width} cells, found {len(tab.rows[k])}",
                                     file=tab.file, line=tab.lines[k]))
        rows = [r for r, ok in zip(tab.rows, ok_len) if ok]
        lines = [ln for ln, ok in zip(tab.lines, ok_len) if ok]
        good = np.ones(len(rows), dtype=bool)
        parsed: dict[str, np.ndarray] = {}
        for key in ["frame", *cols]:
            native = t2n[key]
            vals, bad = _parse_column([r[index[native]] for r in rows],
                                      allow_empty=key not in ("frame", "x", "y"))
            if key == "frame":
                bad |= ~np.isfinite(vals) | (vals != np.floor(vals))
            for k in np.flatnonzero(bad & good):
                errors.append(ParseError(f"bad value {rows[k][index[native]]!r}", file=tab.file,
                                         line=lines[k], column=native))
            good &= ~bad
            parsed[key] = vals
        tid_col = [r[index[t2n["track_id"]]].strip() for r in rows]
        for k, tid in enumerate(tid_col):
            if tid == "" and good[k]:
                errors.append(ParseError("empty track id", file=tab.file, line=lines[k],
                                         column=t2n["track_id"]))
                good[k] = False
        keep = np.flatnonzero(good)
        ids.extend(_code_key(tid_col[k]) for k in keep)
        frames_l.append(parsed["frame"][keep].astype(np.int64))
        lines_l.append(np.asarray(lines, dtype=np.int64)[keep])
        file_l.extend([tab.file] * len(keep))
        for key in cols:
            cols[key].append(parsed[key][keep] * spec.multiplier(key))
        if "agent_type" in t2n:
            ai = index[t2n["agent_type"]]
            codes.extend(_code_key(rows[k][ai]) for k in keep)

    budget = math.floor(error_budget * total_rows)
    if len(errors) > budget:
        raise errors[0]
    for err in errors:
        log.warning("skipped malformed row: %s", err)

    frames = np.concatenate(frames_l) if frames_l else np.zeros(0, np.int64)
    lines = np.concatenate(lines_l) if lines_l else np.zeros(0, np.int64)
    data = {k: (np.concatenate(v) if v else np.zeros(0)) for k, v in cols.items()}
    n = len(frames)

    # per-row derived quantities
    x, y = data["x"], data["y"]
    if spec.position_semantics == "bbox_corner_upper_left":
        x = x + data["length"] / 2.0
        y = y + data["width"] / 2.0
    heading = np.full(n, np.nan)
    if spec.angle_semantics == "radians_ccw_x":
        heading = normalize_angle(data["heading"])
    elif spec.angle_semantics == "degrees_cw_north":
        heading = normalize_angle(math.pi / 2 - np.radians(data["heading"]))
    if "speed" in data:
        speed = data["speed"]
    elif "vx" in data and "vy" in data:
        speed = np.hypot(data["vx"], data["vy"])
    else:
        speed = np.full(n, np.nan)
    ax = data.get("ax", np.full(n, np.nan))
    ay = data.get("ay", np.full(n, np.nan))
    has_corners = all(k in data for k in CORNER_KEYS)
    if has_corners:
        corners = np.stack([data[k] for k in CORNER_KEYS], axis=1).reshape(n, 4, 2)
        valid = _quads_simple(corners)
        invalid = np.flatnonzero(~valid & np.all(np.isfinite(corners), axis=(1, 2)))
        for k in invalid[:20]:
            log.warning("%s line %d: corners do not form a simple quadrilateral; dropped",
                        file_l[k], lines[k])
        if len(invalid) > 20:
            log.warning("... %d more invalid corner sets", len(invalid) - 20)
        corners[~valid] = np.nan
    else:
        corners = np.full((n, 4, 2), np.nan)
    pixel = (np.stack([data["px_x"], data["px_y"]], axis=1)
             if "px_x" in data and "px_y" in data else None)

    frame0 = int(frames.min()) if n else 0
    rel = frames - frame0

    # group rows by track, preserving file order inside each track
    uniq = sorted(set(ids), key=track_sort_key)
    pos = {tid: i for i, tid in enumerate(uniq)}
    gid = np.fromiter((pos[t] for t in ids), dtype=np.int64, count=n)
    order = np.argsort(gid, kind="stable")
    bounds = np.flatnonzero(np.diff(gid[order])) + 1
    tracks: list[Track] = []
    for seg in np.split(order, bounds) if n else []:
        tid = ids[seg[0]]
        fr = rel[seg]
        step = np.diff(fr)
        if np.any(step <= 0):
            k = seg[1:][step <= 0][0]
            raise ParseError(f"frames of vehicle {tid!r} are not increasing",
                             file=file_l[k], line=int(lines[k]), column=t2n["frame"])
        if agent_type_by_id is not None:
            agent = agent_type_by_id.get(tid)
        elif codes:
            agent = spec.agent_type_codes.get(codes[seg[0]], "unknown") if spec.agent_type_codes \
                else (codes[seg[0]] if codes[seg[0]] in AGENT_TYPES else "unknown")
        else:
            agent = None
        length = float(np.nanmedian(data["length"][seg])) if "length" in data and \
            np.any(np.isfinite(data["length"][seg])) else math.nan
        width = float(np.nanmedian(data["width"][seg])) if "width" in data and \
            np.any(np.isfinite(data["width"][seg])) else math.nan
        if has_corners and not (length > 0 and width > 0):
            from .kinematics import dims_from_corners

            cl, cw = dims_from_corners(corners[seg])
            length = length if length > 0 else cl
            width = width if width > 0 else cw
        pieces = np.split(np.arange(len(seg)), np.flatnonzero(step != 1) + 1)
        if len(pieces) > 1:
            log.warning("vehicle %s has %d frame gaps; split into segments", tid, len(pieces) - 1)
        for j, piece in enumerate(pieces):
            rows_ = seg[piece]
            tracks.append(Track(
                track_id=tid if j == 0 else f"{tid}~{j}", agent_type=agent,
                length=length, width=width, frame=rel[rows_], t=rel[rows_] / spec.frame_rate,
                x=x[rows_], y=y[rows_], heading=heading[rows_], speed=speed[rows_],
                ax=ax[rows_], ay=ay[rows_], obb=corners[rows_],
                pixel=None if pixel is None else pixel[rows_],
            ))

    prov = default_provenance("missing")
    prov["track_id"] = prov["frame_timestamp"] = "measured"
    prov["position_xy"] = "missing" if spec.position_semantics == "front_bumper" else "measured"
    if spec.angle_semantics != "absent":
        prov["heading"] = "measured"
    if "speed" in t2n or ("vx" in t2n and "vy" in t2n):
        prov["speed"] = "measured"
    if "ax" in t2n and "ay" in t2n:
        prov["acceleration_2d"] = "measured"
    if has_corners:
        prov["obb_corners"] = "measured"
    for dim in ("length", "width"):
        if dim in t2n:
            prov[dim] = "measured"
        elif has_corners:
            prov[dim] = "derived"
    if "agent_type" in t2n or agent_type_by_id is not None:
        prov["agent_type"] = "measured"
    if spec.calibration:
        prov["metric_coordinate_calibration"] = "measured"
    if pixel is not None:
        prov["pixel_xy"] = "measured"

    meta = SceneMetadata(
        scene_id=scene_id, dataset_name=spec.dataset_name, frame_rate=spec.frame_rate,
        field_provenance=prov,
        coordinate_frame={"origin": spec.origin, "axes": spec.axes, "units": "m",
                          "calibration": spec.calibration},
        capture_modality=spec.capture_modality,
        converter_provenance={
            "source_format": spec.dataset_name, "converter_version": CONVERTER_VERSION,
            "frame_offset": frame0, "native_frame_rate": spec.frame_rate,
            "position_reference": "front_bumper" if spec.position_semantics == "front_bumper" else "center",
            "position_semantics": spec.position_semantics,
            "angle_semantics": spec.angle_semantics,
            "unit_multipliers": {k: spec.multipliers[k] for k in sorted(spec.multipliers)},
            "skipped_rows": len(errors),
        },
    )
    return CanonicalScene(meta, tuple(tracks))


def _as_paths(paths: str | Path | Iterable[str | Path]) -> list[Path]:
    if isinstance(paths, (str, Path)):
        return [Path(paths)]
    return [Path(p) for p in paths]


def _default_scene_id(paths: list[Path]) -> str:
    return paths[0].stem if paths else "scene"


def convert_with_mapping(paths, spec: MappingSpec, scene_id: str | None = None,
                         error_budget: float = ERROR_BUDGET) -> CanonicalScene:
    """Convert CSV files described by a mapping spec."""
    paths = _as_paths(paths)
    tables = [_read_csv(p) for p in paths]
    return _convert_tables(tables, spec, scene_id or _default_scene_id(paths), None,
                           strict_schema=False, error_budget=error_budget)


def convert_ngsim(paths, scene_id: str | None = None,
                  error_budget: float = ERROR_BUDGET) -> CanonicalScene:
    """NGSIM trajectory CSV. Feet become meters; positions keep NGSIM's
    front-bumper reference until completion recovers the centre."""
    paths = _as_paths(paths)
    tables = [_read_csv(p) for p in paths]
    return _convert_tables(tables, NGSIM_SPEC, scene_id or _default_scene_id(paths), None,
                           strict_schema=True, error_budget=error_budget)


def _highd_files(path: Path) -> tuple[Path, Path | None, Path | None]:
    if path.is_dir():
        tracks = sorted(path.glob("*tracks.csv"))
        if not tracks:
            raise ParseError("no *tracks.csv in directory", file=str(path))
        tr = tracks[0]
        prefix = tr.name[: -len("tracks.csv")]
        meta = path / f"{prefix}tracksMeta.csv"
        rec = path / f"{prefix}recordingMeta.csv"
        return tr, meta if meta.exists() else None, rec if rec.exists() else None
    return path, None, None


def convert_highd(path, tracks_meta=None, recording_meta=None, scene_id: str | None = None,
                  error_budget: float = ERROR_BUDGET) -> CanonicalScene:
    """highD-style recording. ``path`` may be the tracks file or a directory
    holding ``XX_tracks.csv`` with its ``tracksMeta``/``recordingMeta`` files."""
    tracks_path, meta_path, rec_path = _highd_files(Path(path))
    meta_path = Path(tracks_meta) if tracks_meta else meta_path
    rec_path = Path(recording_meta) if recording_meta else rec_path
    spec = HIGHD_SPEC
    if rec_path is not None:
        rec = _read_csv(rec_path)
        if "frameRate" not in rec.header or not rec.rows:
            raise SchemaError("missing mandatory column 'frameRate'", file=str(rec_path), line=1,
                              column="frameRate")
        try:
            rate = float(rec.rows[0][rec.header.index("frameRate")])
        except ValueError:
            raise ParseError("bad frameRate", file=str(rec_path), line=rec.lines[0],
                             column="frameRate") from None
        spec = MappingSpec.from_dict({**HIGHD_SPEC.to_dict(), "frame_rate": rate})
    agents = None
    if meta_path is not None:
        tm = _read_csv(meta_path)
        for col in ("id", "class"):
            if col not in tm.header:
                raise SchemaError(f"missing mandatory column {col!r}", file=str(meta_path), line=1,
                                  column=col)
        ii, ci = tm.header.index("id"), tm.header.index("class")
        agents = {_code_key(r[ii]): spec.agent_type_codes.get(r[ci].strip(), "unknown")
                  for r in tm.rows if len(r) > max(ii, ci)}
    tab = _read_csv(tracks_path)
    sid = scene_id or tracks_path.stem.replace("_tracks", "")
    return _convert_tables([tab], spec, sid, agents, strict_schema=True, error_budget=error_budget)


def convert_citysim(paths, scene_id: str | None = None,
                    error_budget: float = ERROR_BUDGET) -> CanonicalScene:
    """CitySim-style CSV with metric (feet) centre, corners, course and mph speed."""
    paths = _as_paths(paths)
    tables = [_read_csv(p) for p in paths]
    return _convert_tables(tables, CITYSIM_SPEC, scene_id or _default_scene_id(paths), None,
                           strict_schema=True, error_budget=error_budget)


def convert(fmt: str, path, mapping: str | Path | None = None,
            scene_id: str | None = None) -> CanonicalScene:
    """Dispatch by format name: ngsim, highd, citysim, ute or mapfile."""
    if fmt == "ngsim":
        return convert_ngsim(path, scene_id)
    if fmt == "highd":
        return convert_highd(path, scene_id=scene_id)
    if fmt == "citysim":
        return convert_citysim(path, scene_id)
    if fmt == "ute":
        return convert_with_mapping(path, builtin_mapping("ute"), scene_id)
    if fmt == "mapfile":
        if mapping is None:
            raise ConfigurationError("--format mapfile requires a mapping file")
        return convert_with_mapping(path, MappingSpec.load(mapping), scene_id)
    raise ConfigurationError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# exporters (canonical -> native), used for fixtures and round-trip checks
# ---------------------------------------------------------------------------

def _num(v) -> str:
    return repr(float(v))


def _noise(rng: np.random.Generator | None, std: float, shape) -> np.ndarray:
    if rng is None or std == 0:
        return np.zeros(shape)
    return rng.normal(0.0, std, size=shape)


def _require_complete(scene: CanonicalScene) -> None:
    for tr in scene.tracks:
        if not (np.all(np.isfinite(tr.heading)) and np.all(np.isfinite(tr.speed))
                and np.all(np.isfinite(tr.ax))):
            raise DataError(f"exporter needs a completed scene (track {tr.track_id})")


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


_NGSIM_CLASS = {"motorcycle": 1, "car": 2, "truck": 3, "bus": 3}


def export_ngsim(scene: CanonicalScene, path: str | Path, noise_std: float = 0.0,
                 rng: np.random.Generator | None = None, frame_offset: int = 1) -> Path:
    """Write NGSIM columns: front-bumper positions and dimensions in feet,
    scalar speed/acceleration, no heading or corners."""
    _require_complete(scene)
    path = Path(path)
    header = ["Vehicle_ID", "Frame_ID", "Total_Frames", "Global_Time", "Local_X", "Local_Y",
              "v_Length", "v_Width", "v_Class", "v_Vel", "v_Acc", "Lane_ID"]
    rows = []
    dt = scene.metadata.dt
    for tr in scene.tracks:
        n = len(tr)
        ux, uy = np.cos(tr.heading), np.sin(tr.heading)
        bx = tr.x + tr.length / 2 * ux
        by = tr.y + tr.length / 2 * uy
        e = _noise(rng, noise_std, (n, 2))
        lon_acc = tr.ax * ux + tr.ay * uy
        for i in range(n):
            f = int(tr.frame[i]) + frame_offset
            rows.append([tr.track_id, f, n, int(round(f * dt * 1000)),
                         _num((bx[i] + e[i, 0]) / FT), _num((by[i] + e[i, 1]) / FT),
                         _num(tr.length / FT), _num(tr.width / FT),
                         _NGSIM_CLASS.get(tr.agent_type or "car", 2),
                         _num(tr.speed[i] / FT), _num(lon_acc[i] / FT), 0])
    _write_rows(path, header, rows)
    return path


def export_highd(scene: CanonicalScene, directory: str | Path, noise_std: float = 0.0,
                 rng: np.random.Generator | None = None, recording_id: str = "01") -> Path:
    """Write ``XX_tracks.csv``, ``XX_tracksMeta.csv`` and ``XX_recordingMeta.csv``."""
    _require_complete(scene)
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = []
    for tr in scene.tracks:
        vx = tr.speed * np.cos(tr.heading)
        vy = tr.speed * np.sin(tr.heading)
        e = _noise(rng, noise_std, (len(tr), 2))
        for i in range(len(tr)):
            rows.append([int(tr.frame[i]) + 1, tr.track_id,
                         _num(tr.x[i] - tr.length / 2 + e[i, 0]), _num(tr.y[i] - tr.width / 2 + e[i, 1]),
                         _num(tr.length), _num(tr.width), _num(vx[i]), _num(vy[i]),
                         _num(tr.ax[i]), _num(tr.ay[i])])
    rows.sort(key=lambda r: (track_sort_key(str(r[1])), r[0]))
    tracks_path = d / f"{recording_id}_tracks.csv"
    _write_rows(tracks_path, ["frame", "id", "x", "y", "width", "height", "xVelocity", "yVelocity",
                              "xAcceleration", "yAcceleration"], rows)
    cls = {"car": "Car", "truck": "Truck", "bus": "Bus"}
    _write_rows(d / f"{recording_id}_tracksMeta.csv", ["id", "class"],
                [[tr.track_id, cls.get(tr.agent_type or "car", "Car")] for tr in scene.tracks])
    _write_rows(d / f"{recording_id}_recordingMeta.csv", ["id", "frameRate"],
                [[recording_id, _num(scene.metadata.frame_rate)]])
    return tracks_path


def export_citysim(scene: CanonicalScene, path: str | Path, noise_std: float = 0.0,
                   rng: np.random.Generator | None = None, px_per_m: float = 10.0) -> Path:
    """Write CitySim columns: centre, four corners (feet), pixel centre,
    course in degrees clockwise from north and speed in mph."""
    _require_complete(scene)
    path = Path(path)
    header = ["frameNum", "carId", "carCenterX", "carCenterY", "carCenterXft", "carCenterYft",
              "boundingBox1Xft", "boundingBox1Yft", "boundingBox2Xft", "boundingBox2Yft",
              "boundingBox3Xft", "boundingBox3Yft", "boundingBox4Xft", "boundingBox4Yft",
              "course", "speed", "laneId"]
    rows = []
    for tr in scene.tracks:
        n = len(tr)
        e = _noise(rng, noise_std, (n, 2))
        ec = _noise(rng, noise_std, (n, 4, 2))
        course = np.mod(90.0 - np.degrees(tr.heading), 360.0)
        for i in range(n):
            cx, cy = tr.x[i] + e[i, 0], tr.y[i] + e[i, 1]
            corners = (tr.obb[i] + ec[i]) / FT
            rows.append([int(tr.frame[i]), tr.track_id, _num(cx * px_per_m), _num(-cy * px_per_m),
                         _num(cx / FT), _num(cy / FT), *(_num(v) for v in corners.reshape(8)),
                         _num(float(course[i])), _num(tr.speed[i] / MPH), 0])
    rows.sort(key=lambda r: (r[0], track_sort_key(str(r[1]))))
    _write_rows(path, header, rows)
    return path


def export_mapping_csv(scene: CanonicalScene, path: str | Path, spec: MappingSpec,
                       noise_std: float = 0.0, rng: np.random.Generator | None = None) -> Path:
    """Write the columns a center-referenced mapping spec reads."""
    _require_complete(scene)
    if spec.position_semantics != "center":
        raise ConfigurationError("export_mapping_csv supports center-referenced specs only")
    path = Path(path)
    n2t = list(spec.columns.items())
    inv_codes = {v: k for k, v in spec.agent_type_codes.items()}
    rows = []
    for tr in scene.tracks:
        e = _noise(rng, noise_std, (len(tr), 2))
        vx = tr.speed * np.cos(tr.heading)
        vy = tr.speed * np.sin(tr.heading)
        for i in range(len(tr)):
            vals = {
                "track_id": tr.track_id, "frame": int(tr.frame[i]),
                "agent_type": inv_codes.get(tr.agent_type, tr.agent_type or ""),
                "x": tr.x[i] + e[i, 0], "y": tr.y[i] + e[i, 1], "length": tr.length,
                "width": tr.width, "speed": tr.speed[i], "vx": vx[i], "vy": vy[i],
                "ax": tr.ax[i], "ay": tr.ay[i],
            }
            if spec.angle_semantics == "radians_ccw_x":
                vals["heading"] = tr.heading[i]
            elif spec.angle_semantics == "degrees_cw_north":
                vals["heading"] = float(np.mod(90.0 - np.degrees(tr.heading[i]), 360.0))
            for k, key in enumerate(CORNER_KEYS):
                vals[key] = tr.obb[i].reshape(8)[k]
            row = []
            for _native, key in n2t:
                v = vals.get(key, "")
                if isinstance(v, float):
                    v = _num(v / spec.multiplier(key)) if key in NUMERIC_KEYS and key != "heading" else _num(v)
                row.append(v)
            rows.append(row)
    _write_rows(path, [c for c, _ in n2t], rows)
    return path
