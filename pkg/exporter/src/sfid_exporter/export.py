"""Export one bi-temporal image pair as SFID tensors plus a manifest."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .backends import BackendDescriptor, BackendError, HeadOutputs, _image_size, build_backend
from .sfid_format import write_manifest, write_tensor


class ExportError(RuntimeError):
    """Head outputs are inconsistent or cannot be written."""


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_-]+", "_", text)


def _check_heads(out: HeadOutputs, label: str, c: int, h: int, w: int) -> None:
    if out.semantic.shape != (c, h, w):
        raise ExportError(f"{label}: semantic stack is {out.semantic.shape}, expected {(c, h, w)}")
    if len(out.query_maps) != len(out.query_confidences):
        raise ExportError(f"{label}: {len(out.query_maps)} query maps but "
                          f"{len(out.query_confidences)} confidences")
    for i, qmap in enumerate(out.query_maps):
        if qmap.shape != (h, w):
            raise ExportError(f"{label}: query {i} map is {qmap.shape}, expected {(h, w)}")
    for i, conf in enumerate(out.query_confidences):
        if not 0.0 <= conf <= 1.0:
            raise ExportError(f"{label}: query {i} confidence {conf} outside [0, 1]")
    if len(out.presence) != c:
        raise ExportError(f"{label}: presence has {len(out.presence)} entries for {c} prompts")
    for i, p in enumerate(out.presence):
        if not 0.0 <= p <= 1.0:
            raise ExportError(f"{label}: presence[{i}] = {p} outside [0, 1]")


def export_pair(
    image1: str | Path,
    image2: str | Path,
    backend: BackendDescriptor,
    out_dir: str | Path,
    pair_id: str | None = None,
) -> Path:
    """Run the backend on both images and write the scene-pair directory.

    Returns the manifest path. Head outputs are written exactly as the
    backend produced them; only their shapes and ranges are checked against
    the manifest contract before anything touches disk.
    """
    image1, image2 = Path(image1), Path(image2)
    h1, w1 = _image_size(image1)
    h2, w2 = _image_size(image2)
    if (h1, w1) != (h2, w2):
        raise ExportError(f"image sizes differ: {image1} is {(h1, w1)}, {image2} is {(h2, w2)}")

    runner = build_backend(backend)
    heads = []
    for time_index, image in ((1, image1), (2, image2)):
        out = runner.infer(image, time_index)
        _check_heads(out, f"t{time_index}", len(backend.prompts), h1, w1)
        heads.append(out)

    if pair_id is None:
        pair_id = _slug(f"{image1.stem}--{image2.stem}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    document: dict = {
        "pair_id": pair_id,
        "height": h1,
        "width": w1,
        "vocabulary": list(backend.prompts),
    }
    for label, image, out in (("t1", image1, heads[0]), ("t2", image2, heads[1])):
        sem_name = f"{label}_semantic.sfid"
        write_tensor(out_dir / sem_name, out.semantic, probability=True)
        queries = []
        for i, (qmap, conf) in enumerate(zip(out.query_maps, out.query_confidences)):
            q_name = f"{label}_query_{i:03d}.sfid"
            write_tensor(out_dir / q_name, np.asarray(qmap, dtype=np.float32),
                         probability=True)
            queries.append({"map": q_name, "confidence": float(conf)})
        document[label] = {
            "semantic_stack": sem_name,
            "instance_queries": queries,
            "presence": [float(p) for p in out.presence],
            "image": str(image),
        }
    return write_manifest(out_dir / "manifest.json", document)
