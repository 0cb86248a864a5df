import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bench_helpers import replay_predictions, write_benchmark
from oracles import polygons_overlap
from trajstd.errors import ConfigurationError, ContractError, IntegrityError
from trajstd.evaluation import (BenchmarkConfig, PredictionInstance, PredictionSet, ResultRecord,
                                SceneRef, assign_split, compute_ade_fde, compute_collision_rate,
                                compute_regression_suite, default_timestamp, list_results,
                                record_result, truth_from_scenes)
from trajstd.geometry import obb_corners
from trajstd.hashing import fnv1a_hex
from trajstd.schema import CanonicalScene
from trajstd.synthetic import random_scene, synthetic_metadata, track_from_arrays


def config(ratios=(0.7, 0.1, 0.2), salt="s1"):
    return BenchmarkConfig("b", "1", (SceneRef("s", "s", "abc"),), salt, ratios, 10, 5)


def test_fnv_reference_vectors():
    assert fnv1a_hex(b"") == "cbf29ce484222325"
    assert fnv1a_hex(b"a") == "af63dc4c8601ec8c"
    assert fnv1a_hex(b"foobar") == "85944171f73967e8"


def test_split_deterministic_and_degenerate():
    cfg = config()
    assert assign_split("s", "17", cfg) == assign_split("s", "17", cfg)
    one = config((1.0, 0.0, 0.0))
    assert {assign_split("s", str(i), one) for i in range(500)} == {"train"}


@pytest.mark.parametrize("salt", ["s1", "other"])
def test_split_proportions(salt):
    cfg = config(salt=salt)
    counts = {"train": 0, "val": 0, "test": 0}
    for i in range(10_000):
        counts[assign_split("scene", str(i), cfg)] += 1
    for name, ratio in zip(("train", "val", "test"), cfg.ratios):
        assert abs(counts[name] / 10_000 - ratio) <= 0.015


def test_salt_changes_assignments():
    a, b = config(salt="a"), config(salt="b")
    diff = sum(assign_split("s", str(i), a) != assign_split("s", str(i), b) for i in range(1000))
    assert diff > 100


def test_config_validation():
    with pytest.raises(ConfigurationError):
        config((0.5, 0.1, 0.2))
    with pytest.raises(ConfigurationError):
        BenchmarkConfig("b", "1", (SceneRef("s", "s", ""),), "x", (0.7, 0.1, 0.2), 10, 5)
    cfg = config()
    assert BenchmarkConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.config_hash() == BenchmarkConfig.from_dict(cfg.to_dict()).config_hash()


def _pset(modes_list, truth_list, horizon):
    inst = tuple(PredictionInstance("s", str(i), 0, np.asarray(m, float))
                 for i, m in enumerate(modes_list))
    truth = {("s", str(i), 0): np.asarray(t, float) for i, t in enumerate(truth_list)}
    return PredictionSet(horizon, inst), truth


def test_ade_identity_and_offset():
    gt = np.stack([np.arange(8.0), np.zeros(8)], axis=1)
    p, t = _pset([gt[None]], [gt], 8)
    assert compute_ade_fde(p, t) == {"ade": 0.0, "fde": 0.0, "min_ade": 0.0, "min_fde": 0.0}
    p, t = _pset([(gt + [0.6, 0.8])[None]], [gt], 8)
    r = compute_ade_fde(p, t)
    assert r["ade"] == pytest.approx(1.0) and r["fde"] == pytest.approx(1.0)


def test_min_semantics():
    gt = np.stack([np.arange(8.0), np.zeros(8)], axis=1)
    p, t = _pset([np.stack([gt + [0, 2.0], gt])], [gt], 8)
    r = compute_ade_fde(p, t)
    assert r["min_ade"] == 0.0 and r["ade"] == pytest.approx(2.0)


def test_horizon_mismatch():
    with pytest.raises(ContractError):
        PredictionSet(5, (PredictionInstance("s", "1", 0, np.zeros((1, 4, 2))),))


def test_min_bounds_random():
    rng = np.random.default_rng(0)
    for _ in range(200):
        k, h = int(rng.integers(1, 6)), int(rng.integers(1, 20))
        gt = rng.normal(0, 10, (h, 2))
        p, t = _pset([gt + rng.normal(0, 3, (k, h, 2))], [gt], h)
        r = compute_ade_fde(p, t)
        assert r["min_ade"] <= r["ade"] and r["min_fde"] <= r["fde"]


@settings(max_examples=50)
@given(st.floats(-math.pi, math.pi), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.integers(0, 999))
def test_ade_rigid_invariance(angle, tx, ty, seed):
    rng = np.random.default_rng(seed)
    gt = rng.normal(0, 10, (12, 2))
    modes = gt + rng.normal(0, 2, (3, 12, 2))
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    p0, t0 = _pset([modes], [gt], 12)
    p1, t1 = _pset([modes @ rot.T + [tx, ty]], [gt @ rot.T + [tx, ty]], 12)
    a, b = compute_ade_fde(p0, t0), compute_ade_fde(p1, t1)
    for key in a:
        assert abs(a[key] - b[key]) <= 1e-9


def test_truth_from_scenes_contract():
    sc = random_scene(2, 10.0, 3.0, seed=1)
    pred = replay_predictions([sc], horizon=5)
    truth = truth_from_scenes(pred, {sc.metadata.scene_id: sc})
    assert compute_ade_fde(pred, truth)["ade"] == pytest.approx(0.5, abs=1e-5)
    bad = PredictionSet(5, (PredictionInstance(sc.metadata.scene_id, "1", 10_000, np.zeros((1, 5, 2))),))
    with pytest.raises(ContractError):
        truth_from_scenes(bad, {sc.metadata.scene_id: sc})


def test_collision_rate_ground_truth_replay_zero():
    sc = random_scene(6, 10.0, 4.0, seed=2)
    pred = replay_predictions([sc], horizon=10, offset=0.0)
    assert compute_collision_rate(pred, {sc.metadata.scene_id: sc}) == 0.0


def test_collision_rate_parked_vehicle():
    rate, n = 10.0, 40
    t = np.arange(n) / rate
    z = np.zeros(n)
    ego = track_from_arrays("1", np.arange(n), rate, 10 * t, z, z + 10, z, z, z)
    parked = track_from_arrays("2", np.arange(n), rate, z + 60.0, z + 20.0, z, z, z, z)
    scene = CanonicalScene(synthetic_metadata("p", rate), (ego, parked))
    # route the prediction straight at the parked vehicle
    a, h = 5, 15
    path = np.stack([np.linspace(ego.x[a], 60.0, h + 1)[1:], np.linspace(0.0, 20.0, h + 1)[1:]], axis=1)
    pred = PredictionSet(h, (PredictionInstance("p", "1", a, path[None]),))
    head = math.atan2(20.0, 60.0 - ego.x[a])
    last = obb_corners(path[-1, 0], path[-1, 1], head, ego.length, ego.width)
    assert polygons_overlap(last, parked.obb[a + h])
    assert compute_collision_rate(pred, {"p": scene}) == 1.0


def test_collision_rate_empty():
    with pytest.raises(ContractError):
        compute_collision_rate(PredictionSet(3, ()), {})


def test_regression_suite():
    r = compute_regression_suite([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert r["rmse"] == 0.0 and r["mae"] == 0.0 and r["pearson_r"] == pytest.approx(1.0)
    r = compute_regression_suite([1, -1, 1, -1], [0, 0, 0, 0])
    assert r["rmse"] == 1.0 and r["mae"] == 1.0
    assert r["pearson_r"] is None and r["pearson_r_undefined"]
    t = np.array([0.3, 1.7, -2.0, 5.0])
    assert compute_regression_suite(2 * t + 3, t)["pearson_r"] == pytest.approx(1.0)
    with pytest.raises(ContractError):
        compute_regression_suite([1.0], [1.0, 2.0])


def _record(model="m", cfg=None, ts="2020-01-01T00:00:00Z"):
    cfg = cfg or config()
    return ResultRecord(cfg.benchmark_id, cfg.version, cfg.config_hash(), model,
                        {"ade": 1.0}, "d", ts)


def test_repository_append_list_dedup(tmp_path):
    repo = tmp_path / "results.jsonl"
    assert record_result(_record("a"), repo, config())
    assert not record_result(_record("a", ts="2021-01-01T00:00:00Z"), repo, config())
    assert record_result(_record("b"), repo, config())
    got = list_results(repo)
    assert [r.model for r in got] == ["a", "b"]
    assert [r.model for r in list_results(repo, model="b")] == ["b"]
    assert list_results(repo, benchmark_id="other") == []


def test_repository_integrity(tmp_path):
    repo = tmp_path / "results.jsonl"
    rec = _record()
    bad = ResultRecord(rec.benchmark_id, rec.version, "0000000000000000", "m", {}, "d")
    with pytest.raises(IntegrityError):
        record_result(bad, repo, config())
    record_result(rec, repo)
    with pytest.raises(IntegrityError):
        record_result(bad, repo)
    text = repo.read_text().replace('"ade":1.0', '"ade":0.5')
    repo.write_text(text)
    with pytest.raises(IntegrityError):
        list_results(repo)


def test_repository_concurrent_appends(tmp_path):
    repo = tmp_path / "results.jsonl"
    threads = [threading.Thread(target=record_result, args=(_record(f"m{i}"), repo)) for i in range(8)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert sorted(r.model for r in list_results(repo)) == [f"m{i}" for i in range(8)]


def test_timestamp_pinned(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    assert default_timestamp() == "1970-01-01T00:00:00Z"


def test_benchmark_files(tmp_path):
    sc = random_scene(2, 10.0, 3.0, seed=4)
    cfg, path = write_benchmark(tmp_path, [sc])
    assert BenchmarkConfig.load(path) == cfg
