"""Instance decoupling: a binary category mask split into discrete objects.

Connectivity is fixed to the 8-neighborhood (diagonals connect). Labeling is
delegated to scipy's C implementation and then renumbered so that instance 1
is the component whose first foreground pixel comes earliest in row-major
scan order; the output is therefore deterministic regardless of how the
underlying labeling pass orders components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ShapeMismatchError

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class Instance:
    """One connected region: sorted row-major flat pixel indices."""

    label_id: int
    category: int
    pixels: np.ndarray

    @property
    def area(self) -> int:
        return int(self.pixels.size)

    def coords(self, width: int) -> np.ndarray:
        """(N, 2) array of (row, col) pairs."""
        return np.stack(np.divmod(self.pixels, width), axis=1)


@dataclass(frozen=True)
class InstanceSet:
    height: int
    width: int
    category: int
    instances: tuple[Instance, ...]

    def __len__(self) -> int:
        return len(self.instances)

    def foreground_mask(self) -> np.ndarray:
        mask = np.zeros(self.height * self.width, dtype=np.uint8)
        for inst in self.instances:
            mask[inst.pixels] = 1
        return mask.reshape(self.height, self.width)


def connected_components(mask: np.ndarray, category: int = 0) -> InstanceSet:
    """Split a binary mask into maximal 8-connected instances.

    Instance ids are 1, 2, ... in order of each component's first foreground
    pixel in row-major scan; pixel arrays come out sorted. An empty mask is a
    valid input and yields an empty set.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeMismatchError(f"mask must be 2-D, got shape {mask.shape}")
    height, width = mask.shape

    labeled, count = ndimage.label(mask != 0, structure=_EIGHT_CONNECTED)
    if count == 0:
        return InstanceSet(height=height, width=width, category=category, instances=())

    flat = labeled.ravel()
    foreground = np.flatnonzero(flat)
    labels_at = flat[foreground]

    # Rank scipy's labels by first appearance in scan order.
    values, first_seen = np.unique(labels_at, return_index=True)
    scan_order = values[np.argsort(first_seen)]
    rank_of = np.empty(count + 1, dtype=np.int64)
    rank_of[scan_order] = np.arange(1, count + 1)

    # Group pixel indices per component; stable sort keeps them ascending.
    order = np.argsort(rank_of[labels_at], kind="stable")
    grouped = foreground[order]
    sizes = np.bincount(rank_of[labels_at], minlength=count + 1)[1:]
    boundaries = np.cumsum(sizes)[:-1]
    chunks = np.split(grouped, boundaries)

    instances = tuple(
        Instance(label_id=i + 1, category=category, pixels=chunk)
        for i, chunk in enumerate(chunks)
    )
    return InstanceSet(height=height, width=width, category=category, instances=instances)


def filter_instances(instance_set: InstanceSet, min_area: int) -> InstanceSet:
    """Drop instances smaller than `min_area` pixels; ids are preserved."""
    if min_area < 0:
        raise ValueError(f"min_area must be non-negative, got {min_area}")
    if min_area == 0:
        return instance_set
    kept = tuple(inst for inst in instance_set.instances if inst.area >= min_area)
    return InstanceSet(
        height=instance_set.height,
        width=instance_set.width,
        category=instance_set.category,
        instances=kept,
    )
