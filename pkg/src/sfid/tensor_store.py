"""Bit-exact serialization of grids and scene-pair manifests.

This is the ingestion boundary: any exporter that emits these files can feed
the pipeline, regardless of what produced the head outputs.

Tensor container layout (everything little-endian):

    bytes 0-3   magic ``SFID``
    bytes 4-5   format version, uint16 (currently 1)
    byte  6     dtype code: 1=float32, 2=uint8, 3=uint32
    byte  7     rank
    next        rank x uint32 dimension sizes
    then        payload, row-major

A manifest is a UTF-8 JSON file describing one bi-temporal scene pair:

    {
      "pair_id": "...", "height": H, "width": W,
      "vocabulary": ["building", ...],
      "t1": {"semantic_stack": "...",
             "instance_queries": [{"map": "...", "confidence": 0.9}, ...],
             "presence": [0.9, ...], "image": "optional.png"},
      "t2": {...},
      "ground_truth": "optional.sfid"
    }

Relative paths resolve against the manifest's directory. Semantic stacks are
C x H x W float32, query maps H x W float32, ground truth C x H x W uint8
with values in {0, 1}. All floating content is validated once here (finite,
probability maps within [0, 1]); downstream operations assume valid inputs.

Reads are pure and thread-safe; loaded arrays are read-only. Writes to
distinct paths may run in parallel, concurrent writes to one path are the
caller's problem to prevent.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ManifestError, ShapeMismatchError, TensorFormatError, TensorValueError

MAGIC = b"SFID"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHBB")

_DTYPE_BY_CODE = {
    1: np.dtype("<f4"),
    2: np.dtype("u1"),
    3: np.dtype("<u4"),
}
_CODE_BY_KIND = {("f", 4): 1, ("u", 1): 2, ("u", 4): 3}


def _dtype_code(dtype: np.dtype) -> int:
    code = _CODE_BY_KIND.get((dtype.kind, dtype.itemsize))
    if code is None:
        raise TensorValueError(
            f"unsupported dtype {dtype}; expected float32, uint8, or uint32"
        )
    return code


def _validate_values(arr: np.ndarray, probability: bool, context: str) -> None:
    if arr.dtype.kind == "f":
        if not np.isfinite(arr).all():
            raise TensorValueError(f"{context}: non-finite values (NaN/Inf)")
        if probability and arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise TensorValueError(f"{context}: probability values outside [0, 1]")


def write_tensor(path: str | Path, data: np.ndarray, *, probability: bool = False) -> None:
    """Serialize an array; the file is not touched unless validation passes."""
    arr = np.asarray(data)
    code = _dtype_code(arr.dtype)
    if arr.ndim < 1:
        raise TensorValueError("rank-0 tensors are not supported; use shape (1,)")
    if arr.ndim > 255:
        raise TensorValueError(f"rank {arr.ndim} exceeds the format limit of 255")
    for dim in arr.shape:
        if dim <= 0:
            raise TensorValueError(f"non-positive dimension in shape {arr.shape}")
        if dim > 0xFFFFFFFF:
            raise TensorValueError(f"dimension {dim} exceeds uint32")
    _validate_values(arr, probability, str(path))

    payload = np.ascontiguousarray(arr, dtype=_DTYPE_BY_CODE[code]).tobytes()
    header = HEADER.pack(MAGIC, FORMAT_VERSION, code, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + dims + payload)


def read_tensor(path: str | Path, *, probability: bool = False) -> np.ndarray:
    """Read a tensor back; arrays come out read-only and bit-identical."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise TensorFormatError(f"{path}: file shorter than the 8-byte header")
    magic, version, code, rank = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise TensorFormatError(f"{path}: unsupported format version {version}")
    dtype = _DTYPE_BY_CODE.get(code)
    if dtype is None:
        raise TensorFormatError(f"{path}: unknown dtype code {code}")
    if rank < 1:
        raise TensorFormatError(f"{path}: rank must be at least 1")
    dims_end = HEADER.size + 4 * rank
    if len(raw) < dims_end:
        raise TensorFormatError(f"{path}: truncated shape block")
    shape = struct.unpack_from(f"<{rank}I", raw, HEADER.size)
    if any(dim == 0 for dim in shape):
        raise TensorFormatError(f"{path}: zero dimension in shape {shape}")
    count = int(np.prod(shape, dtype=np.int64))
    expected = count * dtype.itemsize
    actual = len(raw) - dims_end
    if actual != expected:
        kind = "truncated" if actual < expected else "trailing bytes in"
        raise TensorFormatError(
            f"{path}: {kind} payload ({actual} bytes for shape {shape}, expected {expected})"
        )
    arr = np.frombuffer(raw, dtype=dtype, offset=dims_end).reshape(shape)
    _validate_values(arr, probability, str(path))
    return arr


@dataclass(frozen=True)
class InstanceQuery:
    """One decoder proposal: a spatial probability map plus its confidence."""

    map: np.ndarray
    confidence: float


@dataclass(frozen=True)
class SceneSnapshot:
    """All head outputs for one acquisition time."""

    semantic: np.ndarray  # (C, H, W) float32
    queries: tuple[InstanceQuery, ...]
    presence: np.ndarray  # (C,) float64
    image: str | None = None


@dataclass(frozen=True)
class ScenePair:
    pair_id: str
    height: int
    width: int
    vocabulary: tuple[str, ...]
    t1: SceneSnapshot
    t2: SceneSnapshot
    ground_truth: np.ndarray | None = None  # (C, H, W) uint8, values in {0, 1}

    @property
    def num_categories(self) -> int:
        return len(self.vocabulary)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ManifestError(message)


def _load_snapshot(
    entry: dict, label: str, base: Path, c: int, h: int, w: int
) -> SceneSnapshot:
    _require(isinstance(entry, dict), f"{label}: expected an object")
    for key in ("semantic_stack", "instance_queries", "presence"):
        _require(key in entry, f"{label}: missing field '{key}'")

    sem_path = base / entry["semantic_stack"]
    try:
        semantic = read_tensor(sem_path, probability=True)
    except FileNotFoundError:
        raise ManifestError(f"{label}: missing file {sem_path}") from None
    if semantic.shape != (c, h, w):
        raise ShapeMismatchError(
            f"{label}: semantic stack is {semantic.shape}, manifest declares {(c, h, w)}"
        )
    if semantic.dtype != np.float32:
        raise ManifestError(f"{label}: semantic stack must be float32, got {semantic.dtype}")

    queries = []
    _require(isinstance(entry["instance_queries"], list), f"{label}: instance_queries must be a list")
    for i, q in enumerate(entry["instance_queries"]):
        _require(isinstance(q, dict) and "map" in q and "confidence" in q,
                 f"{label}: query {i} needs 'map' and 'confidence'")
        conf = q["confidence"]
        if not isinstance(conf, (int, float)) or not 0.0 <= conf <= 1.0:
            raise ManifestError(f"{label}: query {i} confidence {conf!r} outside [0, 1]")
        map_path = base / q["map"]
        try:
            qmap = read_tensor(map_path, probability=True)
        except FileNotFoundError:
            raise ManifestError(f"{label}: missing file {map_path}") from None
        if qmap.shape != (h, w):
            raise ShapeMismatchError(
                f"{label}: query {i} map is {qmap.shape}, manifest declares {(h, w)}"
            )
        queries.append(InstanceQuery(map=qmap, confidence=float(conf)))

    presence_raw = entry["presence"]
    _require(isinstance(presence_raw, list), f"{label}: presence must be a list")
    if len(presence_raw) != c:
        raise ManifestError(
            f"{label}: presence has {len(presence_raw)} entries for {c} categories"
        )
    for i, p in enumerate(presence_raw):
        if not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
            raise ManifestError(f"{label}: presence[{i}] = {p!r} outside [0, 1]")
    presence = np.asarray(presence_raw, dtype=np.float64)
    presence.flags.writeable = False

    image = entry.get("image")
    if image is not None and not isinstance(image, str):
        raise ManifestError(f"{label}: image must be a path string")
    return SceneSnapshot(semantic=semantic, queries=tuple(queries), presence=presence, image=image)


def load_scene_pair(manifest_path: str | Path) -> ScenePair:
    """Load and fully validate one scene pair; nothing partial ever escapes."""
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{manifest_path}: invalid JSON ({exc})") from None
    _require(isinstance(doc, dict), f"{manifest_path}: top level must be an object")
    for key in ("pair_id", "height", "width", "vocabulary", "t1", "t2"):
        _require(key in doc, f"{manifest_path}: missing field '{key}'")

    pair_id = doc["pair_id"]
    _require(isinstance(pair_id, str) and pair_id, f"{manifest_path}: pair_id must be a non-empty string")
    h, w = doc["height"], doc["width"]
    _require(isinstance(h, int) and isinstance(w, int) and h > 0 and w > 0,
             f"{manifest_path}: height/width must be positive integers")
    vocab = doc["vocabulary"]
    _require(isinstance(vocab, list) and vocab and all(isinstance(v, str) and v for v in vocab),
             f"{manifest_path}: vocabulary must be a non-empty list of names")
    _require(len(set(vocab)) == len(vocab), f"{manifest_path}: duplicate vocabulary entries")
    c = len(vocab)

    base = manifest_path.parent
    t1 = _load_snapshot(doc["t1"], f"{manifest_path} t1", base, c, h, w)
    t2 = _load_snapshot(doc["t2"], f"{manifest_path} t2", base, c, h, w)

    ground_truth = None
    if doc.get("ground_truth") is not None:
        gt_path = base / doc["ground_truth"]
        try:
            ground_truth = read_tensor(gt_path)
        except FileNotFoundError:
            raise ManifestError(f"{manifest_path}: missing file {gt_path}") from None
        if ground_truth.dtype != np.uint8:
            raise ManifestError(
                f"{manifest_path}: ground truth must be uint8, got {ground_truth.dtype}"
            )
        if ground_truth.shape != (c, h, w):
            raise ShapeMismatchError(
                f"{manifest_path}: ground truth is {ground_truth.shape}, expected {(c, h, w)}"
            )
        if ground_truth.size and ground_truth.max() > 1:
            raise ManifestError(f"{manifest_path}: ground truth values must be in {{0, 1}}")

    return ScenePair(
        pair_id=pair_id,
        height=h,
        width=w,
        vocabulary=tuple(vocab),
        t1=t1,
        t2=t2,
        ground_truth=ground_truth,
    )


def save_scene_pair(pair: ScenePair, directory: str | Path) -> Path:
    """Persist a pair as tensors plus a manifest; returns the manifest path.

    Inverse of `load_scene_pair` up to file naming; used by the synthetic
    generator so the CLI consumes synthetic and real data identically.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    doc: dict = {
        "pair_id": pair.pair_id,
        "height": pair.height,
        "width": pair.width,
        "vocabulary": list(pair.vocabulary),
    }
    for label, snap in (("t1", pair.t1), ("t2", pair.t2)):
        sem_name = f"{label}_semantic.sfid"
        write_tensor(directory / sem_name, snap.semantic, probability=True)
        queries = []
        for i, q in enumerate(snap.queries):
            q_name = f"{label}_query_{i:03d}.sfid"
            write_tensor(directory / q_name, q.map, probability=True)
            queries.append({"map": q_name, "confidence": q.confidence})
        entry = {
            "semantic_stack": sem_name,
            "instance_queries": queries,
            "presence": [float(p) for p in snap.presence],
        }
        if snap.image is not None:
            entry["image"] = snap.image
        doc[label] = entry
    if pair.ground_truth is not None:
        write_tensor(directory / "ground_truth.sfid", pair.ground_truth)
        doc["ground_truth"] = "ground_truth.sfid"

    manifest_path = directory / "manifest.json"
    manifest_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return manifest_path
