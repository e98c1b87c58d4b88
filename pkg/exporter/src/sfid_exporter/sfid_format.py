"""Writer for the SFID tensor container and scene-pair manifest.

Implemented here from the format definition rather than imported from the
consumer package: the file format is the contract between the two sides,
and an independent writer is what the cross-package conformance tests
exercise.

Container layout (little-endian): magic ``SFID``; uint16 format version
(1); one dtype code byte (1=float32, 2=uint8, 3=uint32); one rank byte;
rank x uint32 dimension sizes; row-major payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SFID"
FORMAT_VERSION = 1

_CODE_BY_KIND = {("f", 4): 1, ("u", 1): 2, ("u", 4): 3}
_LE_DTYPE = {1: "<f4", 2: "u1", 3: "<u4"}


class FormatError(ValueError):
    """Data cannot be represented in the container format."""


def write_tensor(path: str | Path, data: np.ndarray, *, probability: bool = False) -> None:
    arr = np.asarray(data)
    code = _CODE_BY_KIND.get((arr.dtype.kind, arr.dtype.itemsize))
    if code is None:
        raise FormatError(f"unsupported dtype {arr.dtype}; use float32, uint8, or uint32")
    if arr.ndim < 1 or arr.ndim > 255:
        raise FormatError(f"rank {arr.ndim} outside [1, 255]")
    if any(d <= 0 or d > 0xFFFFFFFF for d in arr.shape):
        raise FormatError(f"invalid shape {arr.shape}")
    if arr.dtype.kind == "f":
        if not np.isfinite(arr).all():
            raise FormatError(f"{path}: non-finite values")
        if probability and arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise FormatError(f"{path}: probability values outside [0, 1]")

    header = struct.pack("<4sHBB", MAGIC, FORMAT_VERSION, code, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=np.dtype(_LE_DTYPE[code])).tobytes()
    Path(path).write_bytes(header + dims + payload)


def write_manifest(path: str | Path, document: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
    return path
