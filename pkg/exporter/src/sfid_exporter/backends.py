"""Segmentation backends producing per-head outputs for one image.

Two kinds:

* ``mock`` synthesizes plausible head outputs deterministically from a seed
  and the image bytes, so the full export contract is testable in CI
  without model weights.
* ``model`` delegates to an adapter callable named by ``model_ref`` as
  ``package.module:function``. The callable receives
  ``(image_path, prompts, device)`` and returns a `HeadOutputs`; this keeps
  the exporter independent of any one model runtime while giving real
  checkpoints a documented seam.
"""

from __future__ import annotations

import importlib
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BACKEND_NAMES = ("mock", "model")


class BackendError(RuntimeError):
    """Backend cannot be constructed or fails to produce head outputs."""


@dataclass(frozen=True)
class HeadOutputs:
    """Raw decoder heads for one image: never post-processed here."""

    semantic: np.ndarray  # (C, H, W) float32 in [0, 1]
    query_maps: tuple[np.ndarray, ...]  # each (H, W) float32 in [0, 1]
    query_confidences: tuple[float, ...]
    presence: tuple[float, ...]  # length C, values in [0, 1]


@dataclass(frozen=True)
class BackendDescriptor:
    name: str  # "mock" | "model"
    prompts: tuple[str, ...]
    model_ref: str | None = None
    device: str | None = None
    seed: int = 0  # mock backend only

    def __post_init__(self) -> None:
        if self.name not in BACKEND_NAMES:
            raise BackendError(f"unknown backend {self.name!r}; expected one of {BACKEND_NAMES}")
        if not self.prompts or any(not p for p in self.prompts):
            raise BackendError("prompt list must be non-empty")
        if self.name == "model" and not self.model_ref:
            raise BackendError("the model backend needs --model-ref package.module:function")


class MockBackend:
    """Deterministic head synthesis: same seed and same image bytes give the
    same outputs, byte for byte. Plants a few smooth bumps per prompt."""

    def __init__(self, descriptor: BackendDescriptor):
        self.descriptor = descriptor

    def infer(self, image_path: str | Path, time_index: int) -> HeadOutputs:
        data = Path(image_path).read_bytes()
        height, width = _image_size(image_path)
        rng = np.random.default_rng(
            [self.descriptor.seed & 0xFFFFFFFF, time_index, zlib.crc32(data)]
        )
        prompts = self.descriptor.prompts
        ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)

        semantic = np.full((len(prompts), height, width), 0.03, dtype=np.float64)
        query_maps: list[np.ndarray] = []
        confidences: list[float] = []
        presence: list[float] = []
        for c in range(len(prompts)):
            n_objects = int(rng.integers(0, 4))
            for _ in range(n_objects):
                cy = rng.uniform(0, height)
                cx = rng.uniform(0, width)
                ry = rng.uniform(2, max(3.0, height / 4))
                rx = rng.uniform(2, max(3.0, width / 4))
                bump = np.exp(-(((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2))
                semantic[c] = np.maximum(semantic[c], 0.95 * bump)
                query_maps.append((0.9 * bump).astype(np.float32))
                confidences.append(float(rng.uniform(0.7, 1.0)))
            presence.append(float(rng.uniform(0.85, 1.0)) if n_objects else
                            float(rng.uniform(0.0, 0.1)))
        return HeadOutputs(
            semantic=np.clip(semantic, 0.0, 1.0).astype(np.float32),
            query_maps=tuple(query_maps),
            query_confidences=tuple(confidences),
            presence=tuple(presence),
        )


class ModelBackend:
    """Adapter-based real backend; resolves ``model_ref`` lazily."""

    def __init__(self, descriptor: BackendDescriptor):
        self.descriptor = descriptor
        module_name, _, attr = (descriptor.model_ref or "").partition(":")
        if not module_name or not attr:
            raise BackendError(
                f"model_ref {descriptor.model_ref!r} is not of the form package.module:function"
            )
        try:
            module = importlib.import_module(module_name)
        except ImportError as exc:
            raise BackendError(f"cannot load model adapter {module_name!r}: {exc}") from exc
        try:
            self._adapter = getattr(module, attr)
        except AttributeError:
            raise BackendError(f"module {module_name!r} has no attribute {attr!r}") from None

    def infer(self, image_path: str | Path, time_index: int) -> HeadOutputs:
        del time_index  # a real model sees one image at a time
        out = self._adapter(str(image_path), list(self.descriptor.prompts),
                            self.descriptor.device)
        if not isinstance(out, HeadOutputs):
            raise BackendError(
                f"adapter returned {type(out).__name__}, expected HeadOutputs"
            )
        return out


def build_backend(descriptor: BackendDescriptor):
    if descriptor.name == "mock":
        return MockBackend(descriptor)
    return ModelBackend(descriptor)


def _image_size(image_path: str | Path) -> tuple[int, int]:
    """(height, width) of an image file; decode errors become BackendError."""
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(image_path) as img:
            width, height = img.size
    except FileNotFoundError:
        raise BackendError(f"image not found: {image_path}") from None
    except UnidentifiedImageError as exc:
        raise BackendError(f"cannot decode image {image_path}: {exc}") from None
    return height, width
