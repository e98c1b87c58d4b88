"""Batch runner, evaluation harness, and the command-line surface."""

import json

import numpy as np
import pytest

from sfid.cli import main
from sfid.errors import ConfigError, EvalInputError
from sfid.matching import detect_changes_pmc
from sfid.metrics import ConfusionCounts
from sfid.pipeline import (
    RunConfig,
    category_slug,
    discover_manifests,
    process_scene_pair,
    run_eval,
    run_pipeline,
)
from sfid.synthetic import SynthConfig, generate_scene
from sfid.tensor_store import load_scene_pair, read_tensor, save_scene_pair, write_tensor


def _make_corpus(tmp_path, n=3, **kwargs):
    manifests = []
    scenes = []
    for i in range(n):
        cfg = SynthConfig(seed=100 + i, height=24, width=24, categories=2,
                          objects_per_image=(2, 4), max_object_side=7, **kwargs)
        scene = generate_scene(cfg)
        manifests.append(save_scene_pair(scene.pair, tmp_path / "scenes" / scene.pair.pair_id))
        scenes.append(scene)
    return manifests, scenes


def test_run_pipeline_writes_masks_and_manifest(tmp_path):
    manifests, scenes = _make_corpus(tmp_path)
    out = tmp_path / "out"
    cfg = RunConfig(manifests=tuple(manifests), output_dir=out)
    result = run_pipeline(cfg)
    assert not result.failures
    for scene in scenes:
        for name in scene.pair.vocabulary:
            path = out / "masks" / f"{scene.pair.pair_id}.{category_slug(name)}.sfid"
            assert path.is_file()
            mask = read_tensor(path)
            assert mask.dtype == np.uint8
            assert mask.shape == (24, 24)

    doc = json.loads(result.run_manifest.read_text())
    # config echo carries every effective parameter, defaults included
    for key in ("strategy", "tau_match", "background_threshold", "min_area",
                "baseline_threshold", "vocabulary", "workers", "manifests", "output_dir"):
        assert key in doc["config"]
    assert doc["config"]["tau_match"] == 0.5
    assert all(p["status"] == "ok" for p in doc["pairs"])
    assert all(p["seconds"] >= 0 for p in doc["pairs"])


def test_failed_pair_does_not_abort(tmp_path):
    manifests, _ = _make_corpus(tmp_path, n=2)
    broken = tmp_path / "scenes" / "broken" / "manifest.json"
    broken.parent.mkdir(parents=True)
    broken.write_text("{broken json")
    cfg = RunConfig(manifests=(manifests[0], broken, manifests[1]), output_dir=tmp_path / "out")
    result = run_pipeline(cfg)
    assert len(result.outcomes) == 3
    assert len(result.failures) == 1
    assert result.failures[0].error is not None
    ok = [o for o in result.outcomes if o.status == "ok"]
    assert len(ok) == 2


def test_pmc_dispatch_matches_direct_call(tmp_path):
    manifests, scenes = _make_corpus(tmp_path, n=1)
    pair = load_scene_pair(manifests[0])
    cfg = RunConfig(manifests=tuple(manifests), output_dir=tmp_path / "out", strategy="pmc")
    masks = process_scene_pair(pair, cfg)

    from sfid.fusion import aggregate_instances, fuse_semantic_instance, gate_and_label

    labels = []
    for snap in (pair.t1, pair.t2):
        agg = aggregate_instances(snap.queries, pair.height, pair.width)
        fused = np.stack([fuse_semantic_instance(snap.semantic[i], agg)
                          for i in range(pair.num_categories)])
        labels.append(gate_and_label(fused, snap.presence, cfg.background_threshold))
    for i, name in enumerate(pair.vocabulary):
        assert np.array_equal(masks[name], detect_changes_pmc(labels[0], labels[1], i))


def test_l1_masks_identical_across_categories(tmp_path):
    manifests, _ = _make_corpus(tmp_path, n=1, semantic_jitter=0.05)
    pair = load_scene_pair(manifests[0])
    cfg = RunConfig(manifests=tuple(manifests), output_dir=tmp_path / "out", strategy="l1")
    masks = process_scene_pair(pair, cfg)
    values = list(masks.values())
    for m in values[1:]:
        assert np.array_equal(values[0], m)


def test_vocabulary_restriction(tmp_path):
    manifests, scenes = _make_corpus(tmp_path, n=1)
    cfg = RunConfig(manifests=tuple(manifests), output_dir=tmp_path / "out",
                    vocabulary=("tree",))
    pair = load_scene_pair(manifests[0])
    masks = process_scene_pair(pair, cfg)
    assert list(masks) == ["tree"]
    with pytest.raises(ConfigError):
        process_scene_pair(pair, RunConfig(manifests=tuple(manifests),
                                           output_dir=tmp_path / "out",
                                           vocabulary=("nonsense",)))


def test_worker_count_does_not_change_bytes(tmp_path):
    manifests, _ = _make_corpus(tmp_path, n=4, semantic_jitter=0.05)
    outs = {}
    for workers in (1, 4):
        out = tmp_path / f"out{workers}"
        run_pipeline(RunConfig(manifests=tuple(manifests), output_dir=out, workers=workers))
        outs[workers] = {
            p.name: p.read_bytes() for p in sorted((out / "masks").glob("*.sfid"))
        }
    assert outs[1] == outs[4]


def test_run_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig(manifests=(), output_dir=tmp_path).validate()
    base = dict(manifests=(tmp_path / "m.json",), output_dir=tmp_path)
    with pytest.raises(ConfigError):
        RunConfig(**base, strategy="bogus").validate()
    with pytest.raises(ConfigError):
        RunConfig(**base, tau_match=0.0).validate()
    with pytest.raises(ConfigError):
        RunConfig(**base, workers=0).validate()
    with pytest.raises(ConfigError):
        RunConfig(**base, min_area=-1).validate()


def test_discover_manifests(tmp_path):
    manifests, _ = _make_corpus(tmp_path, n=2)
    found = discover_manifests(tmp_path / "scenes")
    assert set(found) == set(manifests)
    assert discover_manifests(manifests[0]) == (manifests[0],)
    with pytest.raises(ConfigError):
        discover_manifests(tmp_path / "nope")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ConfigError):
        discover_manifests(empty)


# --- evaluation ------------------------------------------------------------


def _write_mask(path, arr):
    write_tensor(path, np.asarray(arr, dtype=np.uint8))


def test_eval_perfect_prediction(tmp_path):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir(), gt.mkdir()
    mask = np.zeros((6, 6), dtype=np.uint8)
    mask[2:4, 2:4] = 1
    for d in (pred, gt):
        _write_mask(d / "p1.building.sfid", mask)
    report = run_eval(pred, gt)
    r = report.per_category["building"]
    assert (r.iou, r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0, 1.0)


def test_eval_all_zero_prediction(tmp_path):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir(), gt.mkdir()
    gt_mask = np.zeros((6, 6), dtype=np.uint8)
    gt_mask[0, 0:3] = 1
    _write_mask(gt / "p1.building.sfid", gt_mask)
    _write_mask(pred / "p1.building.sfid", np.zeros((6, 6)))
    report = run_eval(pred, gt)
    assert report.per_category["building"].iou == 0.0


def test_eval_two_pair_hand_tally(tmp_path):
    # pair 1: tp=2 fp=1 fn=1; pair 2: tp=1 fp=0 fn=2
    # micro totals: tp=3 fp=1 fn=3 -> IoU 3/7, P 3/4, R 3/6
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir(), gt.mkdir()
    _write_mask(gt / "a.building.sfid", [[1, 1, 1, 0]])
    _write_mask(pred / "a.building.sfid", [[1, 1, 0, 1]])
    _write_mask(gt / "b.building.sfid", [[1, 1, 1, 0]])
    _write_mask(pred / "b.building.sfid", [[1, 0, 0, 0]])
    report = run_eval(pred, gt)
    r = report.per_category["building"]
    assert r.counts == ConfusionCounts(tp=3, fp=1, fn=3, tn=1)
    assert r.iou == pytest.approx(3 / 7)
    assert r.precision == pytest.approx(3 / 4)
    assert r.recall == pytest.approx(3 / 6)
    assert r.f1 == pytest.approx(2 * (3 / 4) * (1 / 2) / (3 / 4 + 1 / 2))


def test_eval_missing_counterpart(tmp_path):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir(), gt.mkdir()
    _write_mask(gt / "a.building.sfid", [[1]])
    with pytest.raises(EvalInputError):
        run_eval(pred, gt)
    _write_mask(pred / "a.building.sfid", [[1]])
    _write_mask(pred / "b.building.sfid", [[1]])
    with pytest.raises(EvalInputError):
        run_eval(pred, gt)


def test_eval_shape_mismatch(tmp_path):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir(), gt.mkdir()
    _write_mask(gt / "a.building.sfid", [[1, 0]])
    _write_mask(pred / "a.building.sfid", [[1]])
    with pytest.raises(Exception):
        run_eval(pred, gt)


# --- CLI -------------------------------------------------------------------


def test_cli_synth_run_eval_round_trip(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["synth", "--out", str(data), "--pairs", "3", "--seed", "7",
                 "--height", "24", "--width", "24", "--change-fraction", "0.5"]) == 0
    out = tmp_path / "out"
    assert main(["run", "--input", str(data / "scenes"), "--out", str(out)]) == 0
    report_dir = tmp_path / "report"
    assert main(["eval", "--pred", str(out / "masks"), "--gt", str(data / "gt"),
                 "--out", str(report_dir)]) == 0
    captured = capsys.readouterr()
    assert "class avg" in captured.out
    doc = json.loads((report_dir / "report.json").read_text())
    # noise-free synthetic scenes are reproduced exactly
    assert doc["class_average"]["iou"] == 1.0
    assert (report_dir / "report.txt").read_text().strip()


def test_cli_partial_failure_exit_code(tmp_path):
    data = tmp_path / "data"
    main(["synth", "--out", str(data), "--pairs", "1", "--seed", "1",
          "--height", "24", "--width", "24"])
    broken = data / "scenes" / "zzz" / "manifest.json"
    broken.parent.mkdir(parents=True)
    broken.write_text("{")
    assert main(["run", "--input", str(data / "scenes"), "--out", str(tmp_path / "out")]) == 1


def test_cli_invalid_config_exit_code(tmp_path):
    assert main(["run", "--input", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2


def test_cli_config_file_and_flag_precedence(tmp_path):
    data = tmp_path / "data"
    main(["synth", "--out", str(data), "--pairs", "1", "--seed", "3",
          "--height", "24", "--width", "24"])
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"strategy": "pmc", "tau_match": 0.7}))
    out = tmp_path / "out"
    assert main(["run", "--input", str(data / "scenes"), "--out", str(out),
                 "--config", str(cfg_file), "--tau-match", "0.6"]) == 0
    doc = json.loads((out / "run_manifest.json").read_text())
    assert doc["config"]["strategy"] == "pmc"  # from file
    assert doc["config"]["tau_match"] == 0.6  # flag wins


def test_cli_rejects_unknown_config_keys(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"taumatch": 0.7}))
    assert main(["run", "--input", str(tmp_path), "--out", str(tmp_path / "o"),
                 "--config", str(cfg_file)]) == 2


def test_cli_workers_env_fallback(tmp_path, monkeypatch):
    data = tmp_path / "data"
    main(["synth", "--out", str(data), "--pairs", "2", "--seed", "5",
          "--height", "24", "--width", "24"])
    monkeypatch.setenv("SFID_WORKERS", "2")
    out = tmp_path / "out"
    assert main(["run", "--input", str(data / "scenes"), "--out", str(out)]) == 0
    doc = json.loads((out / "run_manifest.json").read_text())
    assert doc["config"]["workers"] == 2
    monkeypatch.setenv("SFID_WORKERS", "zebra")
    assert main(["run", "--input", str(data / "scenes"), "--out", str(out)]) == 2


def test_category_slug():
    assert category_slug("low vegetation") == "low_vegetation"
    assert category_slug("building") == "building"
    assert category_slug("a/b.c") == "a_b_c"
