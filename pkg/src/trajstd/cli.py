"""Command-line entry point: convert, validate, complete, coverage, ssm,
calibrate and eval.

Exit codes: 0 success, 1 usage/validation/contract failure, 2 I/O or parse
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .converters import convert
from .errors import (CalibrationError, ConfigurationError, ContractError, DataError, FitError,
                     IntegrityError, ParseError, PreconditionError, SimulationError, TrajError)
from .evaluation import (BenchmarkConfig, PredictionSet, ResultRecord, compute_ade_fde,
                         compute_collision_rate, default_timestamp, record_result,
                         scene_content_hash, truth_from_scenes)
from .hashing import fnv1a_hex
from .io import dump_json, load_json, read_scene, write_events, write_scene
from .kinematics import SMOOTHING_METHODS, CompletionConfig, SmoothingConfig, complete_scene
from .schema import FieldCatalog, compute_coverage, default_catalog, validate_scene
from .ssm import SsmConfig, mine_events
from .traffic_models import (FD_MODELS, IDM_BOUNDS, SpaceTimeRegion, calibrate_idm,
                             calibrate_newell, fit_fd, pair_from_scene)
from .traffic_models.fd import fd_points
from .traffic_models.idm import spacing_residuals

log = logging.getLogger("trajstd")

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 1, 2
_USAGE_ERRORS = (ConfigurationError, PreconditionError, ContractError, IntegrityError,
                 CalibrationError, FitError, SimulationError, DataError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _CountingHandler(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.count = 0

    def emit(self, record):
        self.count += 1


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _default_jobs() -> int:
    env = os.environ.get("OZONE_JOBS")
    if env is None:
        return 1
    try:
        return _positive_int(env)
    except argparse.ArgumentTypeError:
        raise UsageError(f"OZONE_JOBS must be a positive integer, got {env!r}") from None


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = parser.add_argument_group("global options")
    g.add_argument("--config", type=Path, default=d(None),
                   help="JSON file with per-command settings; flags override it")
    g.add_argument("--jobs", type=_positive_int, default=d(None),
                   help="worker processes (default: $OZONE_JOBS or 1)")
    g.add_argument("--seed", type=int, default=d(0))
    g.add_argument("--log-level", default=d("WARNING"),
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    g.add_argument("--output-format", default=d("text"), choices=["text", "json"])


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trajstd", description="Trajectory data standardization and analysis toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(p, suppress=False)
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("convert", parents=[common], help="native dataset -> canonical scene")
    c.add_argument("--format", required=True, choices=["ngsim", "highd", "citysim", "ute", "mapfile"])
    c.add_argument("--mapping", type=Path)
    c.add_argument("--input", required=True, type=Path)
    c.add_argument("--output", required=True, type=Path)
    c.add_argument("--scene-id")

    v = sub.add_parser("validate", parents=[common], help="check scene invariants")
    v.add_argument("scene", type=Path)
    v.add_argument("--strict", action="store_true")
    v.add_argument("--catalog", type=Path)

    m = sub.add_parser("complete", parents=[common], help="derive missing fields")
    m.add_argument("scene", type=Path)
    m.add_argument("--output", type=Path, help="write here instead of in place")
    m.add_argument("--smoothing-window", type=float)
    m.add_argument("--smoothing-method", choices=SMOOTHING_METHODS)
    m.add_argument("--max-displacement", type=float)
    m.add_argument("--eps-stop", type=float)
    m.add_argument("--no-smooth", action="store_true")

    cv = sub.add_parser("coverage", parents=[common], help="schema coverage ratio")
    cv.add_argument("scene", type=Path)
    cv.add_argument("--catalog", type=Path)

    s = sub.add_parser("ssm", parents=[common], help="mine risky events")
    s.add_argument("scene", type=Path)
    s.add_argument("--output", type=Path, help="events file (default: <scene>/events.json)")
    for name in SsmConfig.__dataclass_fields__:
        s.add_argument("--" + name.replace("_", "-"), type=float, dest=f"ssm_{name}")

    cal = sub.add_parser("calibrate", help="fit traffic models")
    calsub = cal.add_subparsers(dest="target", required=True, parser_class=_Parser)
    fd = calsub.add_parser("fd", parents=[common], help="fundamental diagram")
    fd.add_argument("scene", type=Path, nargs="?")
    fd.add_argument("--points", type=Path, help="CSV of density,speed pairs instead of a scene")
    fd.add_argument("--model", required=True, choices=FD_MODELS)
    fd.add_argument("--cell-length", type=float, default=100.0, help="region length, m")
    fd.add_argument("--cell-duration", type=float, default=10.0, help="region duration, s")
    fd.add_argument("--axis", type=float, nargs=2, default=(1.0, 0.0))
    fd.add_argument("--output", type=Path)
    cf = calsub.add_parser("cf", parents=[common], help="car following")
    cf.add_argument("scene", type=Path)
    cf.add_argument("--model", required=True, choices=["idm", "newell"])
    cf.add_argument("--leader", required=True)
    cf.add_argument("--follower", required=True)
    cf.add_argument("--bound", action="append", default=[], metavar="NAME=LO:HI",
                    help="narrow an IDM parameter range; repeatable")
    cf.add_argument("--max-tau", type=float, default=5.0)
    cf.add_argument("--output", type=Path)

    e = sub.add_parser("eval", parents=[common], help="score predictions against a benchmark")
    e.add_argument("--benchmark", required=True, type=Path)
    e.add_argument("--predictions", required=True, type=Path)
    e.add_argument("--repo", required=True, type=Path)
    e.add_argument("--model", default="unnamed")
    e.add_argument("--timestamp", help="record timestamp (default: now or $SOURCE_DATE_EPOCH)")
    return p


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _section(args, name: str) -> dict[str, Any]:
    if args.config is None:
        return {}
    data = load_json(args.config)
    if not isinstance(data, dict):
        raise ConfigurationError("config file must hold a JSON object")
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigurationError(f"config section {name!r} must be an object")
    return sec


def _emit(args, payload: dict[str, Any], text: str) -> None:
    if args.output_format == "json":
        sys.stdout.write(dump_json(payload))
    else:
        sys.stdout.write(text.rstrip("\n") + "\n")


def _catalog(path: Path | None) -> FieldCatalog:
    return FieldCatalog.load(path) if path else default_catalog()


def _config_hash(cfg: dict[str, Any]) -> str:
    return fnv1a_hex(dump_json(cfg))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_convert(args) -> int:
    counter = _CountingHandler()
    logging.getLogger("trajstd").addHandler(counter)
    try:
        scene = convert(args.format, args.input, args.mapping, args.scene_id)
    finally:
        logging.getLogger("trajstd").removeHandler(counter)
    write_scene(scene, args.output)
    violations = validate_scene(scene)
    payload = {"scene": str(args.output), "tracks": len(scene.tracks), "states": scene.n_states,
               "warnings": counter.count, "violations": len(violations)}
    text = (f"scene {args.output}: {len(scene.tracks)} tracks, {scene.n_states} states, "
            f"{counter.count} warnings")
    for v in violations:
        text += f"\n  {v.code} at {v.location}: {v.message}"
    _emit(args, payload, text)
    return EXIT_USAGE if violations else EXIT_OK


def cmd_validate(args) -> int:
    scene = read_scene(args.scene)
    catalog = _catalog(args.catalog) if args.strict else None
    violations = validate_scene(scene, strict=args.strict, catalog=catalog)
    payload = {"scene": str(args.scene), "violations": [
        {"code": v.code, "location": v.location, "message": v.message} for v in violations]}
    text = "\n".join(f"{v.code} at {v.location}: {v.message}" for v in violations) or "ok"
    _emit(args, payload, text)
    return EXIT_USAGE if violations else EXIT_OK


def _completion_config(args) -> CompletionConfig:
    sec = _section(args, "complete")
    sm = dict(sec.get("smoothing", {}))
    for flag, key in (("smoothing_window", "window"), ("smoothing_method", "method"),
                      ("max_displacement", "max_displacement")):
        if getattr(args, flag) is not None:
            sm[key] = getattr(args, flag)
    eps = args.eps_stop if args.eps_stop is not None else sec.get("eps_stop", 0.02)
    smooth = False if args.no_smooth else bool(sec.get("smooth", True))
    try:
        return CompletionConfig(smoothing=SmoothingConfig(**sm), eps_stop=float(eps), smooth=smooth)
    except TypeError as exc:
        raise ConfigurationError(f"invalid completion settings: {exc}") from None


def cmd_complete(args) -> int:
    cfg = _completion_config(args)
    scene = read_scene(args.scene)
    done = complete_scene(scene, cfg, jobs=args.jobs)
    out = args.output or args.scene
    write_scene(done, out)
    report = compute_coverage(done)
    _emit(args, {"scene": str(out), "tracks": len(done.tracks), "states": done.n_states,
                 "coverage": report.ratio},
          f"completed {out}: {len(done.tracks)} tracks, {done.n_states} states, "
          f"coverage {report.ratio:.2f}")
    return EXIT_OK


def cmd_coverage(args) -> int:
    scene = read_scene(args.scene)
    report = compute_coverage(scene, _catalog(args.catalog))
    lines = [f"coverage: {report.ratio:.2f}"]
    width = max(len(n) for n in report.presence)
    for name, ok in report.presence.items():
        lines.append(f"  {name:<{width}}  {'present' if ok else 'absent ':<7}  "
                     f"{report.fractions[name]:.3f}")
    _emit(args, {"coverage": report.ratio, "presence": report.presence,
                 "fractions": report.fractions}, "\n".join(lines))
    return EXIT_OK


def _ssm_config(args) -> SsmConfig:
    d = dict(_section(args, "ssm"))
    for name in SsmConfig.__dataclass_fields__:
        v = getattr(args, f"ssm_{name}")
        if v is not None:
            d[name] = v
    return SsmConfig.from_dict(d)


def cmd_ssm(args) -> int:
    cfg = _ssm_config(args)
    scene = read_scene(args.scene)
    events = mine_events(scene, cfg, jobs=args.jobs)
    out = args.output or (args.scene / "events.json")
    write_events(events, out)
    counts: dict[str, int] = {}
    for ev in events:
        counts[ev.conflict_type] = counts.get(ev.conflict_type, 0) + 1
    _emit(args, {"events": len(events), "by_type": counts, "output": str(out),
                 "config": cfg.to_dict()},
          f"{len(events)} events written to {out}"
          + "".join(f"\n  {k}: {n}" for k, n in sorted(counts.items())))
    return EXIT_OK


def _read_points(path: Path) -> list[tuple[float, float]]:
    pts = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise ParseError("file not found", file=str(path)) from None
    for n, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        cells = line.split(",")
        try:
            pts.append((float(cells[0]), float(cells[1])))
        except (ValueError, IndexError):
            if n == 1:
                continue  # header
            raise ParseError("expected two numeric cells: density,speed", file=str(path), line=n) from None
    return pts


def _regions(scene, cell_length: float, cell_duration: float, axis) -> list[SpaceTimeRegion]:
    ux, uy = axis
    norm = math.hypot(ux, uy)
    s = np.concatenate([(tr.x * ux + tr.y * uy) / norm for tr in scene.tracks])
    t = np.concatenate([tr.t for tr in scene.tracks])
    s0, s1 = float(np.nanmin(s)), float(np.nanmax(s))
    t0, t1 = float(t.min()), float(t.max())
    ns = max(1, int((s1 - s0) // cell_length))
    nt = max(1, int((t1 - t0) // cell_duration))
    return [SpaceTimeRegion(s0 + i * cell_length, s0 + (i + 1) * cell_length,
                            t0 + j * cell_duration, t0 + (j + 1) * cell_duration, (ux, uy))
            for i in range(ns) for j in range(nt)]


def _write_record(args, record: dict[str, Any], text: str) -> None:
    if args.output is not None:
        args.output.write_text(dump_json(record), encoding="utf-8")
    _emit(args, record, text)


def cmd_calibrate_fd(args) -> int:
    if (args.scene is None) == (args.points is None):
        raise UsageError("give either a scene directory or --points")
    cfg = {"model": args.model, "cell_length": args.cell_length,
           "cell_duration": args.cell_duration, "axis": list(args.axis)}
    if args.points is not None:
        pts = _read_points(args.points)
        cfg["source"] = "points"
    else:
        scene = read_scene(args.scene)
        pts = fd_points(scene, _regions(scene, args.cell_length, args.cell_duration, args.axis))
        cfg["source"] = "edie"
    fit = fit_fd(pts, args.model)
    record = {**fit.to_dict(), "config": cfg, "config_hash": _config_hash(cfg)}
    params = ", ".join(f"{k}={v:.6g}" for k, v in fit.params.items())
    _write_record(args, record, f"{fit.model}: {params}; rmse {fit.rmse:.4g}, "
                                f"r2 {fit.r_squared:.4f}, n {fit.n_points}")
    return EXIT_OK


def _parse_bounds(items: Sequence[str]) -> dict[str, tuple[float, float]]:
    out = {}
    for item in items:
        try:
            name, rng = item.split("=", 1)
            lo, hi = (float(v) for v in rng.split(":", 1))
        except ValueError:
            raise UsageError(f"--bound expects NAME=LO:HI, got {item!r}") from None
        if name not in IDM_BOUNDS:
            raise UsageError(f"--bound: unknown parameter {name!r}")
        out[name] = (lo, hi)
    return out


def cmd_calibrate_cf(args) -> int:
    bounds = {**{k: tuple(v) for k, v in _section(args, "calibrate").get("bounds", {}).items()},
              **_parse_bounds(args.bound)}
    scene = read_scene(args.scene)
    pair = pair_from_scene(scene, args.leader, args.follower)
    cfg = {"model": args.model, "leader": args.leader, "follower": args.follower,
           "seed": args.seed}
    if args.model == "idm":
        cfg["bounds"] = {k: list(v) for k, v in sorted(bounds.items())}
        cal = calibrate_idm(pair, bounds, seed=args.seed, jobs=args.jobs)
        resid = spacing_residuals(pair, cal.params)
        spacing = pair.spacing
        sst = float(((spacing - spacing.mean()) ** 2).sum())
        r2 = 1.0 - float((resid ** 2).sum()) / sst if sst > 0 else None
        record = {**cal.to_dict(), "r_squared": r2, "n_points": len(spacing)}
        params = cal.params.to_dict()
    else:
        cfg["max_tau"] = args.max_tau
        cal = calibrate_newell(pair.leader_x, pair.follower_x, pair.dt, args.max_tau)
        record = {**cal.to_dict(), "r_squared": None}
        params = cal.params.to_dict()
    record.update(config=cfg, config_hash=_config_hash(cfg))
    text = f"{args.model}: " + ", ".join(f"{k}={v:.6g}" for k, v in params.items()) + \
           f"; rmse {record['rmse']:.4g} m"
    if record.get("weak_identifiability"):
        text += f"\nweak identifiability: {', '.join(record['weak_directions'])}"
    _write_record(args, record, text)
    return EXIT_OK


def cmd_eval(args) -> int:
    config = BenchmarkConfig.load(args.benchmark)
    base = args.benchmark.parent
    scenes = {}
    hashes = []
    for ref in config.scenes:
        path = (base / ref.path) if ref.path else base / ref.scene_id
        actual = scene_content_hash(path)
        if actual != ref.content_hash:
            raise IntegrityError(f"scene {ref.scene_id}: content hash {actual} does not match "
                                 f"benchmark ({ref.content_hash})")
        scenes[ref.scene_id] = read_scene(path)
        hashes.append(actual)
    pred = PredictionSet.load(args.predictions)
    if pred.horizon != config.horizon:
        raise ContractError(f"prediction horizon {pred.horizon} does not match benchmark "
                            f"horizon {config.horizon}")
    truth = truth_from_scenes(pred, scenes)
    metrics: dict[str, Any] = {}
    wanted = set(config.metrics)
    if wanted & {"ade", "fde", "min_ade", "min_fde"}:
        disp = compute_ade_fde(pred, truth)
        metrics.update({k: v for k, v in disp.items() if k in wanted})
    if "collision_rate" in wanted:
        metrics["collision_rate"] = compute_collision_rate(pred, scenes)
    record = ResultRecord(
        benchmark_id=config.benchmark_id, version=config.version,
        config_hash=config.config_hash(), model=args.model, metrics=metrics,
        data_hash=fnv1a_hex("".join(hashes)),
        timestamp=args.timestamp or default_timestamp(),
        metadata={"mode_convention": "mode0", "collision_reference": "ground_truth_others",
                  "n_instances": len(pred.instances)})
    appended = record_result(record, args.repo, config)
    _emit(args, {"metrics": metrics, "appended": appended, "record_hash": record.content_hash()},
          "\n".join(f"{k}: {v:.6g}" for k, v in metrics.items())
          + ("\nrecord appended" if appended else "\nidentical record already stored"))
    return EXIT_OK


_COMMANDS = {"convert": cmd_convert, "validate": cmd_validate, "complete": cmd_complete,
             "coverage": cmd_coverage, "ssm": cmd_ssm, "eval": cmd_eval}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.jobs is None:
            args.jobs = _default_jobs()
        np.random.seed(args.seed)
        if args.command == "calibrate":
            handler = cmd_calibrate_fd if args.target == "fd" else cmd_calibrate_cf
        else:
            handler = _COMMANDS[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"trajstd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"trajstd: parse error: {exc}", file=sys.stderr)
        return EXIT_IO
    except _USAGE_ERRORS as exc:
        print(f"trajstd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrajError as exc:
        print(f"trajstd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"trajstd: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
