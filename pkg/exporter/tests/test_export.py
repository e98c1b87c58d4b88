"""Cross-package conformance: exporter output must load through the
consumer's reader with zero errors, and identical seeds must give identical
bytes."""

import sys

import numpy as np
import pytest
from PIL import Image

from sfid.tensor_store import load_scene_pair  # the consumer side
from sfid_exporter.backends import BackendDescriptor, BackendError, HeadOutputs
from sfid_exporter.cli import main
from sfid_exporter.export import ExportError, export_pair


@pytest.fixture()
def image_pair(tmp_path):
    rng = np.random.default_rng(11)
    paths = []
    for name in ("before.png", "after.png"):
        arr = rng.integers(0, 256, size=(24, 32, 3), dtype=np.uint8)
        path = tmp_path / name
        Image.fromarray(arr).save(path)
        paths.append(path)
    return paths


def _descriptor(prompts=("building", "water"), seed=7, **kwargs):
    return BackendDescriptor(name="mock", prompts=tuple(prompts), seed=seed, **kwargs)


def _tree_bytes(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_mock_export_loads_through_consumer(image_pair, tmp_path):
    manifest = export_pair(*image_pair, _descriptor(), tmp_path / "scene")
    pair = load_scene_pair(manifest)
    assert pair.vocabulary == ("building", "water")
    assert (pair.height, pair.width) == (24, 32)
    assert pair.t1.semantic.shape == (2, 24, 32)
    assert pair.t1.semantic.dtype == np.float32
    assert len(pair.t1.presence) == 2
    assert pair.ground_truth is None
    assert pair.t1.image and pair.t2.image


def test_identical_seed_identical_bytes(image_pair, tmp_path):
    export_pair(*image_pair, _descriptor(seed=42), tmp_path / "a")
    export_pair(*image_pair, _descriptor(seed=42), tmp_path / "b")
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")


def test_different_seeds_differ(image_pair, tmp_path):
    export_pair(*image_pair, _descriptor(seed=1), tmp_path / "a")
    export_pair(*image_pair, _descriptor(seed=2), tmp_path / "b")
    assert _tree_bytes(tmp_path / "a") != _tree_bytes(tmp_path / "b")


def test_output_depends_on_image_content(image_pair, tmp_path):
    export_pair(*image_pair, _descriptor(), tmp_path / "a")
    export_pair(*reversed(image_pair), _descriptor(), tmp_path / "b",
                pair_id="same")
    a = _tree_bytes(tmp_path / "a")
    b = _tree_bytes(tmp_path / "b")
    assert a["t1_semantic.sfid"] != b["t1_semantic.sfid"]


def test_single_prompt_gives_single_category(image_pair, tmp_path):
    manifest = export_pair(*image_pair, _descriptor(prompts=("building",)), tmp_path / "s")
    pair = load_scene_pair(manifest)
    assert pair.vocabulary == ("building",)
    assert pair.t1.semantic.shape[0] == 1


def test_empty_prompts_rejected():
    with pytest.raises(BackendError):
        BackendDescriptor(name="mock", prompts=())


def test_unknown_backend_rejected():
    with pytest.raises(BackendError):
        BackendDescriptor(name="sam", prompts=("a",))


def test_image_size_mismatch(image_pair, tmp_path):
    small = tmp_path / "small.png"
    Image.fromarray(np.zeros((8, 8, 3), dtype=np.uint8)).save(small)
    with pytest.raises(ExportError):
        export_pair(image_pair[0], small, _descriptor(), tmp_path / "s")


def test_missing_image(image_pair, tmp_path):
    with pytest.raises(BackendError):
        export_pair(image_pair[0], tmp_path / "nope.png", _descriptor(), tmp_path / "s")


def test_undecodable_image(image_pair, tmp_path):
    junk = tmp_path / "junk.png"
    junk.write_bytes(b"not an image")
    with pytest.raises(BackendError):
        export_pair(image_pair[0], junk, _descriptor(), tmp_path / "s")


def test_model_backend_adapter_seam(image_pair, tmp_path, monkeypatch):
    adapter_dir = tmp_path / "adapters"
    adapter_dir.mkdir()
    (adapter_dir / "stub_heads.py").write_text(
        "import numpy as np\n"
        "from sfid_exporter.backends import HeadOutputs\n"
        "from PIL import Image\n"
        "def build(image_path, prompts, device):\n"
        "    with Image.open(image_path) as img:\n"
        "        w, h = img.size\n"
        "    c = len(prompts)\n"
        "    return HeadOutputs(\n"
        "        semantic=np.full((c, h, w), 0.25, dtype=np.float32),\n"
        "        query_maps=(np.full((h, w), 0.5, dtype=np.float32),),\n"
        "        query_confidences=(0.9,),\n"
        "        presence=tuple(1.0 for _ in prompts),\n"
        "    )\n"
    )
    monkeypatch.syspath_prepend(str(adapter_dir))
    descriptor = BackendDescriptor(name="model", prompts=("building",),
                                   model_ref="stub_heads:build")
    manifest = export_pair(*image_pair, descriptor, tmp_path / "s")
    pair = load_scene_pair(manifest)
    assert pair.t1.semantic[0, 0, 0] == np.float32(0.25)
    assert len(pair.t1.queries) == 1


def test_model_backend_requires_ref():
    with pytest.raises(BackendError):
        BackendDescriptor(name="model", prompts=("a",))


def test_model_backend_missing_runtime(image_pair, tmp_path):
    descriptor = BackendDescriptor(name="model", prompts=("a",),
                                   model_ref="definitely_not_installed:load")
    with pytest.raises(BackendError):
        export_pair(*image_pair, descriptor, tmp_path / "s")


def test_malformed_model_ref(image_pair, tmp_path):
    descriptor = BackendDescriptor(name="model", prompts=("a",), model_ref="no_colon_here")
    with pytest.raises(BackendError):
        export_pair(*image_pair, descriptor, tmp_path / "s")


def test_cli_round_trip(image_pair, tmp_path, capsys):
    out = tmp_path / "scene"
    rc = main(["--t1", str(image_pair[0]), "--t2", str(image_pair[1]),
               "--prompts", "building,water", "--backend", "mock",
               "--out", str(out), "--seed", "3"])
    assert rc == 0
    manifest_path = capsys.readouterr().out.strip()
    pair = load_scene_pair(manifest_path)
    assert pair.vocabulary == ("building", "water")


def test_cli_error_exit_code(tmp_path, capsys):
    rc = main(["--t1", str(tmp_path / "a.png"), "--t2", str(tmp_path / "b.png"),
               "--prompts", "building", "--out", str(tmp_path / "s")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err
