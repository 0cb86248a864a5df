"""Scene directory reader/writer.

Layout: ``scene.json`` (metadata), ``tracks.csv`` (one row per state, empty
cell = missing) and optional ``events.json``.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ParseError
from .schema import CanonicalScene, SceneMetadata, Track, track_sort_key

TRACK_COLUMNS = (
    "track_id", "agent_type", "length_m", "width_m", "frame", "t_s", "x_m", "y_m",
    "heading_rad", "speed_mps", "ax_mps2", "ay_mps2",
    "flx_m", "fly_m", "frx_m", "fry_m", "rrx_m", "rry_m", "rlx_m", "rly_m",
    "px_x", "px_y",
)
SCENE_FILE = "scene.json"
TRACKS_FILE = "tracks.csv"
EVENTS_FILE = "events.json"


def dump_json(obj: Any) -> str:
    """Deterministic JSON text used for every structured file."""
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def load_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ParseError("file not found", file=str(path)) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, file=str(path), line=exc.lineno, column=exc.colno) from None


def _cell(v: float) -> str:
    return repr(v) if v == v else ""


def _float_col(arr: np.ndarray) -> list[str]:
    return [repr(v) if v == v else "" for v in arr.tolist()]


def _track_rows(tr: Track):
    n = len(tr)
    cols = [
        [tr.track_id] * n,
        [tr.agent_type or ""] * n,
        [_cell(tr.length)] * n,
        [_cell(tr.width)] * n,
        [str(f) for f in tr.frame.tolist()],
        _float_col(tr.t), _float_col(tr.x), _float_col(tr.y),
        _float_col(tr.heading), _float_col(tr.speed), _float_col(tr.ax), _float_col(tr.ay),
    ]
    flat = tr.obb.reshape(n, 8)
    cols.extend(_float_col(flat[:, k]) for k in range(8))
    if tr.pixel is None:
        cols.extend([[""] * n, [""] * n])
    else:
        cols.extend([_float_col(tr.pixel[:, 0]), _float_col(tr.pixel[:, 1])])
    return zip(*cols)


def write_scene(scene: CanonicalScene, path: str | Path) -> None:
    path = Path(path)
    if not path.parent.exists():
        raise FileNotFoundError(f"parent directory does not exist: {path.parent}")
    path.mkdir(exist_ok=True)
    (path / SCENE_FILE).write_text(dump_json(scene.metadata.to_dict()), encoding="utf-8")
    tracks = sorted(scene.tracks, key=lambda tr: track_sort_key(tr.track_id))
    with open(path / TRACKS_FILE, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACK_COLUMNS)
        for tr in tracks:
            w.writerows(_track_rows(tr))
    events_path = path / EVENTS_FILE
    if scene.events is not None:
        write_events(scene.events, events_path)
    elif events_path.exists():
        events_path.unlink()


def write_events(events, path: str | Path) -> None:
    payload = [ev if isinstance(ev, dict) else ev.to_dict() for ev in events]
    Path(path).write_text(dump_json(payload), encoding="utf-8")


def read_events(path: str | Path):
    from .ssm import RiskyEvent

    data = load_json(path)
    if not isinstance(data, list):
        raise ParseError("events file must hold a JSON array", file=str(path), line=1)
    return tuple(RiskyEvent.from_dict(d) for d in data)


def _parse_float(text: str, file: str, line: int, column: str) -> float:
    if text == "":
        return math.nan
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"non-numeric value {text!r}", file=file, line=line, column=column) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {text!r}", file=file, line=line, column=column)
    return v


def read_tracks_csv(path: str | Path, frame_rate: float) -> list[Track]:
    path = Path(path)
    fname = str(path)
    try:
        fh = open(path, encoding="utf-8", newline="")
    except FileNotFoundError:
        raise ParseError("file not found", file=fname) from None
    groups: dict[str, dict[str, Any]] = {}
    order: list[str] = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(header) != TRACK_COLUMNS:
            raise ParseError(f"header must be {','.join(TRACK_COLUMNS)}", file=fname, line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TRACK_COLUMNS):
                raise ParseError(f"expected {len(TRACK_COLUMNS)} cells, found {len(row)}",
                                 file=fname, line=lineno)
            tid = row[0]
            if tid == "":
                raise ParseError("empty track_id", file=fname, line=lineno, column="track_id")
            try:
                frame = int(row[4])
            except ValueError:
                raise ParseError(f"non-integer frame {row[4]!r}", file=fname, line=lineno,
                                 column="frame") from None
            vals = [_parse_float(row[k], fname, lineno, TRACK_COLUMNS[k]) for k in range(5, 22)]
            g = groups.get(tid)
            if g is None:
                length = _parse_float(row[2], fname, lineno, "length_m")
                width = _parse_float(row[3], fname, lineno, "width_m")
                g = groups[tid] = {"agent_type": row[1] or None, "length": length,
                                   "width": width, "frames": [], "vals": [], "line": lineno}
                order.append(tid)
            else:
                if (row[1] or None) != g["agent_type"] or \
                        not _same(_parse_float(row[2], fname, lineno, "length_m"), g["length"]) or \
                        not _same(_parse_float(row[3], fname, lineno, "width_m"), g["width"]):
                    raise ParseError(f"track-level fields of {tid!r} change between rows",
                                     file=fname, line=lineno)
                if frame <= g["frames"][-1]:
                    raise ParseError(f"frames of track {tid!r} not increasing", file=fname,
                                     line=lineno, column="frame")
            g["frames"].append(frame)
            g["vals"].append(vals)
    tracks = []
    for tid in order:
        g = groups[tid]
        frames = np.asarray(g["frames"], dtype=np.int64)
        v = np.asarray(g["vals"], dtype=float).reshape(len(frames), 17)
        pixel = v[:, 15:17]
        tracks.append(Track(
            track_id=tid, agent_type=g["agent_type"], length=g["length"], width=g["width"],
            frame=frames, t=v[:, 0], x=v[:, 1], y=v[:, 2], heading=v[:, 3], speed=v[:, 4],
            ax=v[:, 5], ay=v[:, 6], obb=v[:, 7:15].reshape(-1, 4, 2),
            pixel=None if np.all(np.isnan(pixel)) else pixel,
        ))
    return tracks


def _same(a: float, b: float) -> bool:
    return (a == b) or (a != a and b != b)


def read_scene(path: str | Path) -> CanonicalScene:
    path = Path(path)
    if not path.is_dir():
        raise ParseError("scene directory not found", file=str(path))
    meta_dict = load_json(path / SCENE_FILE)
    try:
        meta = SceneMetadata.from_dict(meta_dict)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid metadata: {exc!r}", file=str(path / SCENE_FILE)) from None
    tracks = read_tracks_csv(path / TRACKS_FILE, meta.frame_rate)
    events = read_events(path / EVENTS_FILE) if (path / EVENTS_FILE).exists() else None
    return CanonicalScene(meta, tuple(tracks), events)
