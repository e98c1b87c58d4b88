"""Bi-temporal instance matching and change-mask assembly.

An instance is unchanged when at least one single counterpart at the other
time covers at least `tau_match` of it (coverage by several counterparts is
not summed). The forward check measures how much of each T1 instance is
covered by T2 instances; the backward check swaps the roles. Unmatched
instances from both sides union into the binary change mask.

Matching only ever runs within one category: decoupling operates on
per-category masks, so cross-category matches are never attempted.

Two pixel-level baseline strategies used for ablation live here as well:
per-category label comparison and thresholded L1/L2 distance between the
bi-temporal probability stacks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .instances import Instance, InstanceSet, connected_components, filter_instances

DEFAULT_TAU_MATCH = 0.5


@dataclass(frozen=True)
class MatchConfig:
    tau_match: float = DEFAULT_TAU_MATCH
    min_area: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.tau_match <= 1.0:
            raise ValueError(f"tau_match must be in (0, 1], got {self.tau_match}")
        if self.min_area < 0:
            raise ValueError(f"min_area must be non-negative, got {self.min_area}")


@dataclass(frozen=True)
class ChangeCandidateSets:
    """Instances left unmatched at each time; these are the changes."""

    c_t1: tuple[Instance, ...]
    c_t2: tuple[Instance, ...]


def overlap_ratio(a: Instance, b: Instance) -> float:
    """Fraction of `a` covered by `b`: |a n b| / |a|. Asymmetric."""
    inter = np.intersect1d(a.pixels, b.pixels, assume_unique=True).size
    return inter / a.area


def _coverage_counts(i1: InstanceSet, i2: InstanceSet) -> np.ndarray:
    """(K1, K2) matrix of pairwise intersection pixel counts."""
    k1, k2 = len(i1), len(i2)
    size = i1.height * i1.width
    la = np.zeros(size, dtype=np.int64)
    lb = np.zeros(size, dtype=np.int64)
    for idx, inst in enumerate(i1.instances):
        la[inst.pixels] = idx + 1
    for idx, inst in enumerate(i2.instances):
        lb[inst.pixels] = idx + 1
    both = np.flatnonzero((la > 0) & (lb > 0))
    counts = np.zeros((k1, k2), dtype=np.int64)
    if both.size:
        codes = (la[both] - 1) * k2 + (lb[both] - 1)
        counts = np.bincount(codes, minlength=k1 * k2).reshape(k1, k2)
    return counts


def match_instances(
    i1: InstanceSet, i2: InstanceSet, cfg: MatchConfig
) -> ChangeCandidateSets:
    """Forward/backward coverage checks over every instance pair."""
    if (i1.height, i1.width) != (i2.height, i2.width):
        raise ShapeMismatchError(
            f"grids differ: {(i1.height, i1.width)} vs {(i2.height, i2.width)}"
        )
    if not i1.instances:
        return ChangeCandidateSets(c_t1=(), c_t2=i2.instances)
    if not i2.instances:
        return ChangeCandidateSets(c_t1=i1.instances, c_t2=())

    counts = _coverage_counts(i1, i2)
    areas1 = np.array([inst.area for inst in i1.instances], dtype=np.float64)
    areas2 = np.array([inst.area for inst in i2.instances], dtype=np.float64)
    best_forward = counts.max(axis=1) / areas1
    best_backward = counts.max(axis=0) / areas2

    c_t1 = tuple(
        inst for inst, cover in zip(i1.instances, best_forward) if cover < cfg.tau_match
    )
    c_t2 = tuple(
        inst for inst, cover in zip(i2.instances, best_backward) if cover < cfg.tau_match
    )
    return ChangeCandidateSets(c_t1=c_t1, c_t2=c_t2)


def assemble_change_mask(
    cands: ChangeCandidateSets, height: int, width: int
) -> np.ndarray:
    """Union of all unmatched instances as a binary mask."""
    mask = np.zeros(height * width, dtype=np.uint8)
    for inst in (*cands.c_t1, *cands.c_t2):
        if inst.pixels.size and (inst.pixels.min() < 0 or inst.pixels.max() >= mask.size):
            raise ShapeMismatchError(
                f"instance {inst.label_id} does not fit a {height}x{width} grid"
            )
        mask[inst.pixels] = 1
    return mask.reshape(height, width)


def detect_changes_instance(
    m1: np.ndarray, m2: np.ndarray, cfg: MatchConfig
) -> np.ndarray:
    """Full instance-level strategy: decouple, filter, match, assemble."""
    m1 = np.asarray(m1)
    m2 = np.asarray(m2)
    if m1.shape != m2.shape:
        raise ShapeMismatchError(f"mask shapes differ: {m1.shape} vs {m2.shape}")
    i1 = filter_instances(connected_components(m1), cfg.min_area)
    i2 = filter_instances(connected_components(m2), cfg.min_area)
    cands = match_instances(i1, i2, cfg)
    return assemble_change_mask(cands, m1.shape[0], m1.shape[1])


def detect_changes_pmc(l1: np.ndarray, l2: np.ndarray, category: int) -> np.ndarray:
    """Pixel-wise mask comparison: per-category symmetric difference."""
    l1 = np.asarray(l1)
    l2 = np.asarray(l2)
    if l1.shape != l2.shape:
        raise ShapeMismatchError(f"label map shapes differ: {l1.shape} vs {l2.shape}")
    return ((l1 == category) ^ (l2 == category)).astype(np.uint8)


def detect_changes_logit(
    s1: np.ndarray,
    s2: np.ndarray,
    norm: str = "l1",
    threshold: float = 0.5,
) -> np.ndarray:
    """Thresholded per-pixel distance between two (C, H, W) stacks.

    The distance image is min-max normalized by its own maximum (all zero if
    the maximum is zero) before thresholding, so one default threshold stays
    serviceable across scenes of different contrast.
    """
    s1 = np.asarray(s1, dtype=np.float64)
    s2 = np.asarray(s2, dtype=np.float64)
    if s1.shape != s2.shape:
        raise ShapeMismatchError(f"stack shapes differ: {s1.shape} vs {s2.shape}")
    if s1.ndim != 3:
        raise ShapeMismatchError(f"expected (C, H, W) stacks, got shape {s1.shape}")
    if threshold < 0:
        raise ValueError(f"threshold must be non-negative, got {threshold}")
    norm = norm.lower()
    diff = s1 - s2
    if norm == "l1":
        dist = np.abs(diff).sum(axis=0)
    elif norm == "l2":
        dist = np.sqrt((diff * diff).sum(axis=0))
    else:
        raise ValueError(f"norm must be 'l1' or 'l2', got {norm!r}")
    peak = dist.max() if dist.size else 0.0
    if peak > 0:
        dist = dist / peak
    else:
        dist = np.zeros_like(dist)
    return (dist >= threshold).astype(np.uint8)
