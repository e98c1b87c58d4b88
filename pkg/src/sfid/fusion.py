"""Synergistic mask fusion.

Per acquisition time: collapse instance queries into one confidence-weighted
response map, max-fuse it with each category's semantic map, rescale by the
per-category presence score, and label each pixel with the winning category.
Pixels whose best gated probability stays below the background threshold get
the background sentinel; the raw argmax would otherwise force every pixel
into some category, which breaks per-category binary evaluation.

All functions here are pure and per-pixel independent.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ShapeMismatchError
from .tensor_store import InstanceQuery

BACKGROUND = -1
DEFAULT_BACKGROUND_THRESHOLD = 0.5


def aggregate_instances(
    queries: Sequence[InstanceQuery], height: int, width: int
) -> np.ndarray:
    """Peak confidence-weighted response across all queries, pixel-wise.

    The empty query set aggregates to the all-zero map (max over an empty
    set of probabilities), which makes max-fusion a no-op downstream.
    """
    out = np.zeros((height, width), dtype=np.float32)
    for i, q in enumerate(queries):
        if q.map.shape != (height, width):
            raise ShapeMismatchError(
                f"query {i} map is {q.map.shape}, expected {(height, width)}"
            )
        np.maximum(out, q.map * np.float32(q.confidence), out=out)
    return out


def fuse_semantic_instance(sem: np.ndarray, agg: np.ndarray) -> np.ndarray:
    """Pixel-wise max of the semantic map and the aggregated instance map."""
    if sem.shape != agg.shape:
        raise ShapeMismatchError(f"semantic {sem.shape} vs aggregate {agg.shape}")
    return np.maximum(sem, agg)


def apply_presence_gate(fused: np.ndarray, presence: np.ndarray) -> np.ndarray:
    """Rescale each category plane of a (C, H, W) stack by its presence score."""
    fused = np.asarray(fused)
    presence = np.asarray(presence)
    if fused.ndim != 3 or presence.ndim != 1 or fused.shape[0] != presence.shape[0]:
        raise ShapeMismatchError(
            f"stack {fused.shape} incompatible with presence of length {presence.shape}"
        )
    if fused.dtype.kind == "f":
        presence = presence.astype(fused.dtype, copy=False)
    return fused * presence[:, None, None]


def label_gated(
    gated: np.ndarray, background_threshold: float = DEFAULT_BACKGROUND_THRESHOLD
) -> np.ndarray:
    """Argmax labeling of an already-gated (C, H, W) stack.

    Ties go to the lowest category index so labeling is deterministic across
    platforms. A pixel whose best gated value falls below the threshold is
    assigned the background sentinel.
    """
    gated = np.asarray(gated)
    if gated.ndim != 3:
        raise ShapeMismatchError(f"expected a (C, H, W) stack, got shape {gated.shape}")
    labels = np.argmax(gated, axis=0).astype(np.int32)
    best = np.take_along_axis(gated, labels[None], axis=0)[0]
    labels[best < background_threshold] = BACKGROUND
    return labels


def gate_and_label(
    fused: np.ndarray,
    presence: np.ndarray,
    background_threshold: float = DEFAULT_BACKGROUND_THRESHOLD,
) -> np.ndarray:
    """Presence-gate a (C, H, W) stack and assign each pixel its best category."""
    return label_gated(apply_presence_gate(fused, presence), background_threshold)


def binarize_category(
    labels: np.ndarray, category: int, num_categories: int | None = None
) -> np.ndarray:
    """Binary mask of the pixels labeled with one category."""
    if category < 0 or (num_categories is not None and category >= num_categories):
        raise ValueError(f"category {category} out of range")
    return (labels == category).astype(np.uint8)
