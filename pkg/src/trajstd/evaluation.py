"""Benchmark configs, prediction metrics and the append-only result repository."""

from __future__ import annotations

import fcntl
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .errors import ConfigurationError, ContractError, IntegrityError, ParseError
from .geometry import obb_corners, polygons_intersect
from .hashing import fmix64, file_hash, fnv1a_64, fnv1a_hex
from .io import SCENE_FILE, TRACKS_FILE, dump_json, load_json
from .schema import CanonicalScene

SPLITS = ("train", "val", "test")
METRICS = ("ade", "fde", "min_ade", "min_fde", "collision_rate")


def scene_content_hash(scene_dir: str | Path) -> str:
    d = Path(scene_dir)
    return file_hash(d / SCENE_FILE, d / TRACKS_FILE)


# ---------------------------------------------------------------------------
# benchmark config and splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SceneRef:
    scene_id: str
    path: str
    content_hash: str


@dataclass(frozen=True)
class BenchmarkConfig:
    benchmark_id: str
    version: str
    scenes: tuple[SceneRef, ...]
    split_salt: str
    ratios: tuple[float, float, float]
    horizon: int
    history: int
    metrics: tuple[str, ...] = ("ade", "fde", "min_ade", "min_fde")
    preprocessing: str = "complete-v1"
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios) or \
                abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigurationError(f"split ratios must be 3 nonnegative values summing to 1, got {self.ratios}")
        missing = [s.scene_id for s in self.scenes if not s.content_hash]
        if missing:
            raise ConfigurationError(f"scene refs without content hash: {missing}")
        if self.horizon < 1 or self.history < 0:
            raise ConfigurationError("horizon must be >= 1 and history >= 0")
        unknown = [m for m in self.metrics if m not in METRICS]
        if unknown:
            raise ConfigurationError(f"unknown metrics {unknown}; known: {', '.join(METRICS)}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "benchmark_id": self.benchmark_id, "version": self.version,
            "scenes": [{"scene_id": s.scene_id, "path": s.path, "content_hash": s.content_hash}
                       for s in self.scenes],
            "split": {"salt": self.split_salt, "ratios": {k: r for k, r in zip(SPLITS, self.ratios)}},
            "horizon": self.horizon, "history": self.history, "metrics": list(self.metrics),
            "preprocessing": self.preprocessing, "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BenchmarkConfig":
        try:
            ratios = d["split"]["ratios"]
            return cls(
                benchmark_id=str(d["benchmark_id"]), version=str(d["version"]),
                scenes=tuple(SceneRef(str(s["scene_id"]), str(s.get("path", "")),
                                      str(s.get("content_hash", ""))) for s in d["scenes"]),
                split_salt=str(d["split"]["salt"]),
                ratios=tuple(float(ratios[k]) for k in SPLITS),
                horizon=int(d["horizon"]), history=int(d.get("history", 0)),
                metrics=tuple(d.get("metrics", ("ade", "fde", "min_ade", "min_fde"))),
                preprocessing=str(d.get("preprocessing", "complete-v1")),
                metadata=dict(d.get("metadata", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid benchmark config: {exc!r}") from None

    @classmethod
    def load(cls, path: str | Path) -> "BenchmarkConfig":
        return cls.from_dict(load_json(path))

    def config_hash(self) -> str:
        return fnv1a_hex(dump_json(self.to_dict()))


def assign_split(scene_id: str, track_id: str, config: BenchmarkConfig) -> str:
    """Deterministic split from the 64-bit FNV-1a hash of salt, scene and
    track, passed through a finalizer so the unit value is evenly spread."""
    key = "\x1f".join((config.split_salt, scene_id, track_id)).encode("utf-8")
    u = fmix64(fnv1a_64(key)) / 2.0 ** 64
    train, val, _ = config.ratios
    if u < train:
        return "train"
    if u < train + val:
        return "val"
    return "test"


# ---------------------------------------------------------------------------
# predictions and metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PredictionInstance:
    scene_id: str
    track_id: str
    anchor_frame: int
    modes: np.ndarray   # (K, H, 2)


@dataclass(frozen=True)
class PredictionSet:
    horizon: int
    instances: tuple[PredictionInstance, ...]

    def __post_init__(self):
        for inst in self.instances:
            m = inst.modes
            if m.ndim != 3 or m.shape[0] < 1 or m.shape[2] != 2:
                raise ContractError(f"{inst.scene_id}/{inst.track_id}@{inst.anchor_frame}: "
                                    f"modes must have shape (K, H, 2), got {m.shape}")
            if m.shape[1] != self.horizon:
                raise ContractError(f"{inst.scene_id}/{inst.track_id}@{inst.anchor_frame}: "
                                    f"horizon {m.shape[1]} does not match {self.horizon}")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PredictionSet":
        try:
            horizon = int(d["horizon"])
            inst = tuple(PredictionInstance(str(p["scene_id"]), str(p["track_id"]),
                                            int(p["anchor_frame"]),
                                            np.asarray(p["modes"], dtype=float))
                         for p in d["predictions"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractError(f"invalid prediction set: {exc!r}") from None
        return cls(horizon, inst)

    @classmethod
    def load(cls, path: str | Path) -> "PredictionSet":
        return cls.from_dict(load_json(path))

    def to_dict(self) -> dict[str, Any]:
        return {"horizon": self.horizon,
                "predictions": [{"scene_id": i.scene_id, "track_id": i.track_id,
                                 "anchor_frame": i.anchor_frame, "modes": i.modes.tolist()}
                                for i in self.instances]}


def _key(inst: PredictionInstance) -> tuple[str, str, int]:
    return inst.scene_id, inst.track_id, inst.anchor_frame


def truth_from_scenes(pred: PredictionSet, scenes: dict[str, CanonicalScene]) -> dict:
    """Ground-truth futures (H, 2) for every prediction instance."""
    out = {}
    for inst in pred.instances:
        scene = scenes.get(inst.scene_id)
        if scene is None:
            raise ContractError(f"scene {inst.scene_id!r} is not part of the benchmark")
        try:
            tr = scene.track(inst.track_id)
        except KeyError:
            raise ContractError(f"track {inst.track_id!r} not in scene {inst.scene_id!r}") from None
        want = np.arange(inst.anchor_frame + 1, inst.anchor_frame + 1 + pred.horizon)
        if inst.anchor_frame not in set(tr.frame.tolist()):
            raise ContractError(f"anchor frame {inst.anchor_frame} missing for track {inst.track_id}")
        idx = np.searchsorted(tr.frame, want)
        if idx[-1] >= len(tr) or not np.array_equal(tr.frame[np.minimum(idx, len(tr) - 1)], want):
            raise ContractError(f"track {inst.track_id} has fewer than {pred.horizon} future frames "
                                f"after anchor {inst.anchor_frame}")
        out[_key(inst)] = np.stack([tr.x[idx], tr.y[idx]], axis=1)
    return out


def compute_ade_fde(pred: PredictionSet, truth: dict) -> dict[str, float]:
    """ADE/FDE of mode 0 and min-over-modes variants, averaged over instances."""
    if not pred.instances:
        raise ContractError("empty prediction set")
    ade = fde = min_ade = min_fde = 0.0
    for inst in pred.instances:
        gt = np.asarray(truth[_key(inst)], dtype=float)
        if gt.shape != (pred.horizon, 2):
            raise ContractError(f"truth for {_key(inst)} has shape {gt.shape}, "
                                f"expected ({pred.horizon}, 2)")
        err = np.hypot(inst.modes[..., 0] - gt[:, 0], inst.modes[..., 1] - gt[:, 1])  # (K, H)
        per_ade = err.mean(axis=1)
        per_fde = err[:, -1]
        ade += per_ade[0]
        fde += per_fde[0]
        min_ade += per_ade.min()
        min_fde += per_fde.min()
    n = len(pred.instances)
    return {"ade": float(ade / n), "fde": float(fde / n),
            "min_ade": float(min_ade / n), "min_fde": float(min_fde / n)}


def _predicted_headings(start_xy: np.ndarray, start_heading: float, path: np.ndarray) -> np.ndarray:
    pts = np.vstack([start_xy, path])
    d = np.diff(pts, axis=0)
    out = np.empty(len(path))
    h = start_heading
    for i, (dx, dy) in enumerate(d):
        if math.hypot(dx, dy) > 1e-6:
            h = math.atan2(dy, dx)
        out[i] = h
    return out


def compute_collision_rate(pred: PredictionSet, scenes: dict[str, CanonicalScene]) -> float:
    """Share of instances whose mode-0 path overlaps any other agent's
    ground-truth footprint at the same future frame."""
    if not pred.instances:
        raise ContractError("empty prediction set")
    hits = 0
    for inst in pred.instances:
        scene = scenes[inst.scene_id]
        ego = scene.track(inst.track_id)
        ia = int(np.searchsorted(ego.frame, inst.anchor_frame))
        path = inst.modes[0]
        heads = _predicted_headings(np.array([ego.x[ia], ego.y[ia]]), float(ego.heading[ia]), path)
        boxes = obb_corners(path[:, 0], path[:, 1], heads, ego.length, ego.width)
        collided = False
        for other in scene.tracks:
            if other.track_id == ego.track_id:
                continue
            for h in range(pred.horizon):
                f = inst.anchor_frame + 1 + h
                j = int(np.searchsorted(other.frame, f))
                if j < len(other) and other.frame[j] == f and polygons_intersect(boxes[h], other.obb[j]):
                    collided = True
                    break
            if collided:
                break
        hits += collided
    return hits / len(pred.instances)


def compute_regression_suite(pred: Iterable[float], truth: Iterable[float]) -> dict[str, Any]:
    p = np.asarray(list(pred), dtype=float)
    t = np.asarray(list(truth), dtype=float)
    if p.shape != t.shape or p.size == 0:
        raise ContractError(f"pred and truth must be equal-length nonempty vectors, got {p.shape} and {t.shape}")
    e = p - t
    out: dict[str, Any] = {"rmse": float(math.sqrt(np.mean(e * e))), "mae": float(np.mean(np.abs(e)))}
    sp, st = p.std(), t.std()
    if sp == 0 or st == 0:
        out["pearson_r"] = None
        out["pearson_r_undefined"] = True
    else:
        r = float(np.mean((p - p.mean()) * (t - t.mean())) / (sp * st))
        out["pearson_r"] = max(-1.0, min(1.0, r))
        out["pearson_r_undefined"] = False
    return out


# ---------------------------------------------------------------------------
# result repository
# ---------------------------------------------------------------------------

def default_timestamp() -> str:
    """UTC timestamp, pinned by SOURCE_DATE_EPOCH when set."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.replace(microsecond=0).isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class ResultRecord:
    benchmark_id: str
    version: str
    config_hash: str
    model: str
    metrics: dict[str, Any]
    data_hash: str
    timestamp: str = ""
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"benchmark_id": self.benchmark_id, "version": self.version,
                "config_hash": self.config_hash, "model": self.model, "metrics": self.metrics,
                "data_hash": self.data_hash, "timestamp": self.timestamp,
                "metadata": self.metadata}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ResultRecord":
        return cls(**{k: d[k] for k in ("benchmark_id", "version", "config_hash", "model",
                                        "metrics", "data_hash")},
                   timestamp=d.get("timestamp", ""), metadata=d.get("metadata", {}))

    def content_hash(self) -> str:
        """Identity for deduplication. The timestamp is not part of it."""
        d = self.to_dict()
        del d["timestamp"]
        return fnv1a_hex(dump_json(d))


def _line(record: ResultRecord) -> str:
    d = record.to_dict()
    d["record_hash"] = record.content_hash()
    return json.dumps(d, sort_keys=True, ensure_ascii=False, allow_nan=False, separators=(",", ":"))


def _read_lines(repo: Path) -> list[dict[str, Any]]:
    if not repo.exists():
        return []
    out = []
    for n, line in enumerate(repo.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, file=str(repo), line=n, column=exc.colno) from None
    return out


def record_result(record: ResultRecord, repo: str | Path,
                  config: BenchmarkConfig | None = None) -> bool:
    """Append ``record`` unless an identical one is stored. Returns True when
    a line was written.

    The config hash must match ``config`` when given, and must agree with
    every stored record of the same benchmark id and version.
    """
    repo = Path(repo)
    if config is not None:
        if (record.benchmark_id, record.version) != (config.benchmark_id, config.version):
            raise IntegrityError(f"record names {record.benchmark_id}@{record.version}, config is "
                                 f"{config.benchmark_id}@{config.version}")
        if record.config_hash != config.config_hash():
            raise IntegrityError(f"config hash {record.config_hash} does not match benchmark "
                                 f"{config.benchmark_id}@{config.version} ({config.config_hash()})")
    if not repo.parent.exists():
        raise FileNotFoundError(f"repository directory does not exist: {repo.parent}")
    lock_path = repo.with_name(repo.name + ".lock")
    with open(lock_path, "w") as lock:
        fcntl.flock(lock, fcntl.LOCK_EX)
        try:
            existing = _read_lines(repo)
            for d in existing:
                if (d.get("benchmark_id"), d.get("version")) == (record.benchmark_id, record.version) \
                        and d.get("config_hash") != record.config_hash:
                    raise IntegrityError(
                        f"config hash {record.config_hash} conflicts with stored results for "
                        f"{record.benchmark_id}@{record.version} ({d.get('config_hash')})")
            h = record.content_hash()
            if any(d.get("record_hash") == h for d in existing):
                return False
            old = repo.read_bytes() if repo.exists() else b""
            if old and not old.endswith(b"\n"):
                old += b"\n"
            fd, tmp = tempfile.mkstemp(dir=repo.parent, prefix=repo.name + ".")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(old + (_line(record) + "\n").encode("utf-8"))
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, repo)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        finally:
            fcntl.flock(lock, fcntl.LOCK_UN)
    return True


def list_results(repo: str | Path, benchmark_id: str | None = None, version: str | None = None,
                 model: str | None = None) -> list[ResultRecord]:
    """Stored records in insertion order, optionally filtered."""
    out = []
    for d in _read_lines(Path(repo)):
        rec = ResultRecord.from_dict(d)
        if d.get("record_hash") != rec.content_hash():
            raise IntegrityError(f"stored record for {rec.model} fails its content hash")
        if benchmark_id is not None and rec.benchmark_id != benchmark_id:
            continue
        if version is not None and rec.version != version:
            continue
        if model is not None and rec.model != model:
            continue
        out.append(rec)
    return out
