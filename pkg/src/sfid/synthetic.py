"""Synthetic bi-temporal scenes with exactly known ground truth.

Stands in for a segmentation model plus real imagery at desk scale: plants
axis-aligned rectangles and random 4-connected blobs per category, makes a
configurable fraction of them appear, disappear, or relocate between the two
times, and emits the same head outputs a real exporter would (semantic
stacks, per-object instance queries, presence scores). Ground truth marks
exactly the changed objects' pixels.

Probability levels are chosen with margin so that jitter amplitudes up to
0.1 cannot push any pixel across the default labeling threshold of 0.5, nor
flip any argmax: a noise-free or mildly jittered scene runs through the full
pipeline and reproduces its ground truth exactly.

The aggregated query map is shared across all categories downstream, so any
pixel where it exceeds every semantic response ties the fused values across
categories and the tie-break would drag the argmax toward category 0. Query
maps therefore stay below the background threshold (0.45 < 0.5): the
aggregate can never label a pixel on its own in these fixtures.

The optional illumination stage injects the pseudo-changes that lighting
and season shifts cause in real head outputs, two kinds per scene:

  * dip zones cover part of each unchanged object, just above the label
    threshold at T1 (0.62) and mostly below it at T2 (0.42): labels flip to
    background while the probability step stays small, so pixel comparison
    sees spurious change, a thresholded logit distance does not, and the
    instance still overlaps its counterpart well above any reasonable tau;
  * ghost zones are faint spurious responses (0.38) of a present category
    over background at T2 only: no label or instance is created, but the
    logit distance there is large relative to background, the reverse
    failure mode.

The brute-force reference implementations at the bottom (flood-fill
labeling, quadratic pairwise matching) are deliberately simple and are the
oracles the fast paths get tested against.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import ndimage

from .errors import GenerationError, ShapeMismatchError
from .instances import Instance, InstanceSet
from .rng import Xoshiro256StarStar
from .tensor_store import InstanceQuery, ScenePair, SceneSnapshot

INTERIOR_LEVEL = 0.8
BACKGROUND_LEVEL = 0.05
QUERY_LEVEL = 0.45
# T1 dips stay above the 0.5 threshold even under 0.1 jitter (the T1
# component stays whole); T2 dips mostly fall below it (labels flip).
DIP_T1_LEVEL = 0.62
DIP_T2_LEVEL = 0.42
GHOST_LEVEL = 0.38

DEFAULT_VOCABULARY = ("building", "tree", "water", "low_vegetation", "surface", "playground")

_PLACEMENT_ATTEMPTS = 200
_CHANGE_KINDS = ("appear", "disappear", "relocate")
_NEIGHBORS_8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
_DILATE = np.ones((3, 3), dtype=bool)


def vocabulary_for(n: int) -> tuple[str, ...]:
    names = list(DEFAULT_VOCABULARY[:n])
    names += [f"category{i}" for i in range(len(names), n)]
    return tuple(names)


@dataclass(frozen=True)
class IlluminationConfig:
    """Pseudo-change injection (see module docstring).

    `dip_fraction` is the share of each unchanged object dimmed at T2;
    `ghost_fraction` sizes the spurious background response planted per
    unchanged object, relative to that object's area.
    """

    dip_fraction: float = 0.35
    ghost_fraction: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.dip_fraction <= 0.45:
            raise ValueError("dip_fraction must stay in [0, 0.45] to keep overlaps above 0.5")
        if not 0.0 <= self.ghost_fraction <= 1.0:
            raise ValueError("ghost_fraction must be in [0, 1]")


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    height: int = 64
    width: int = 64
    categories: int = 2
    objects_per_image: tuple[int, int] = (3, 6)
    change_fraction: float = 0.3
    semantic_jitter: float = 0.0
    confidence_jitter: float = 0.0
    presence_flip: float = 0.0
    blob_fraction: float = 0.5
    min_object_side: int = 3
    max_object_side: int = 10
    illumination: IlluminationConfig | None = None

    def __post_init__(self) -> None:
        if self.height < 8 or self.width < 8:
            raise ValueError("grid must be at least 8x8")
        if self.categories < 1:
            raise ValueError("at least one category required")
        lo, hi = self.objects_per_image
        if lo < 0 or hi < lo:
            raise ValueError(f"bad objects_per_image range {self.objects_per_image}")
        for name in ("change_fraction", "semantic_jitter", "confidence_jitter",
                     "presence_flip", "blob_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.min_object_side < 2:
            raise ValueError("min_object_side must be at least 2")
        if self.max_object_side < self.min_object_side:
            raise ValueError("max_object_side below min_object_side")
        if self.max_object_side > min(self.height, self.width) - 2:
            raise ValueError("max_object_side does not fit the grid")


@dataclass(frozen=True)
class PlantedObject:
    category: int
    change: str  # "none" | "appear" | "disappear" | "relocate"
    shape: str  # "rect" | "blob"
    pixels_t1: np.ndarray | None
    pixels_t2: np.ndarray | None


@dataclass(frozen=True)
class GeneratedScene:
    pair: ScenePair
    ground_truth: np.ndarray  # (C, H, W) uint8
    objects: tuple[PlantedObject, ...]


class _Placer:
    """Rejection-sampling placement keeping every footprint 1 pixel apart.

    One shared occupancy grid covers both times: same-time gaps prevent
    accidental 8-connectivity merges, cross-time gaps prevent a changed
    object from accidentally overlapping (and thus matching) another one.
    """

    def __init__(self, height: int, width: int, rng: Xoshiro256StarStar):
        self.height = height
        self.width = width
        self.rng = rng
        self.blocked = np.zeros((height, width), dtype=bool)

    def _free(self, rows: np.ndarray, cols: np.ndarray) -> bool:
        return not self.blocked[rows, cols].any()

    def _commit(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        footprint = np.zeros((self.height, self.width), dtype=bool)
        footprint[rows, cols] = True
        self.blocked |= ndimage.binary_dilation(footprint, structure=_DILATE)
        pixels = np.flatnonzero(footprint.ravel())
        return pixels

    def place_rect(self, h_obj: int, w_obj: int) -> np.ndarray | None:
        for _ in range(_PLACEMENT_ATTEMPTS):
            r0 = self.rng.randint(0, self.height - h_obj)
            c0 = self.rng.randint(0, self.width - w_obj)
            rows, cols = np.mgrid[r0:r0 + h_obj, c0:c0 + w_obj]
            rows, cols = rows.ravel(), cols.ravel()
            if self._free(rows, cols):
                return self._commit(rows, cols)
        return None

    def place_blob(self, target_area: int) -> np.ndarray | None:
        for _ in range(_PLACEMENT_ATTEMPTS):
            seed = (self.rng.randint(0, self.height - 1), self.rng.randint(0, self.width - 1))
            if self.blocked[seed]:
                continue
            cells = self._grow_blob(seed, target_area)
            rows = np.array([r for r, _ in cells])
            cols = np.array([c for _, c in cells])
            if self._free(rows, cols):
                return self._commit(rows, cols)
        return None

    def _grow_blob(self, seed: tuple[int, int], target_area: int) -> list[tuple[int, int]]:
        cells = {seed}
        frontier = [seed]
        while len(cells) < target_area and frontier:
            idx = self.rng.randint(0, len(frontier) - 1)
            r, c = frontier[idx]
            options = [
                (r + dr, c + dc)
                for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1))
                if 0 <= r + dr < self.height and 0 <= c + dc < self.width
                and (r + dr, c + dc) not in cells
                and not self.blocked[r + dr, c + dc]
            ]
            if not options:
                frontier.pop(idx)
                continue
            cell = options[self.rng.randint(0, len(options) - 1)]
            cells.add(cell)
            frontier.append(cell)
        return sorted(cells)


def _plant_objects(
    cfg: SynthConfig, rng: Xoshiro256StarStar, placer: "_Placer"
) -> list[PlantedObject]:
    lo, hi = cfg.objects_per_image
    count = rng.randint(lo, hi)
    objects: list[PlantedObject] = []
    for _ in range(count):
        category = rng.randint(0, cfg.categories - 1)
        change = "none"
        if rng.random() < cfg.change_fraction:
            change = rng.choice(_CHANGE_KINDS)
        shape = "blob" if rng.random() < cfg.blob_fraction else "rect"

        if shape == "rect":
            h_obj = rng.randint(cfg.min_object_side, cfg.max_object_side)
            w_obj = rng.randint(cfg.min_object_side, cfg.max_object_side)
            footprint = placer.place_rect(h_obj, w_obj)
        else:
            lo_area = cfg.min_object_side * cfg.min_object_side
            hi_area = max(lo_area, (cfg.max_object_side * cfg.max_object_side * 2) // 3)
            footprint = placer.place_blob(rng.randint(lo_area, hi_area))
        if footprint is None:
            raise GenerationError(
                f"could not fit object {len(objects) + 1} of {count} on a "
                f"{cfg.height}x{cfg.width} grid"
            )

        second = None
        if change == "relocate":
            if shape == "rect":
                second = placer.place_rect(h_obj, w_obj)
            else:
                second = placer.place_blob(len(footprint))
            if second is None:
                raise GenerationError(
                    f"could not fit relocation target on a {cfg.height}x{cfg.width} grid"
                )

        if change == "appear":
            pixels_t1, pixels_t2 = None, footprint
        elif change == "disappear":
            pixels_t1, pixels_t2 = footprint, None
        elif change == "relocate":
            pixels_t1, pixels_t2 = footprint, second
        else:
            pixels_t1 = pixels_t2 = footprint
        objects.append(
            PlantedObject(
                category=category, change=change, shape=shape,
                pixels_t1=pixels_t1, pixels_t2=pixels_t2,
            )
        )
    return objects


def _pixels_stay_connected(pixels: np.ndarray, height: int, width: int) -> bool:
    if pixels.size == 0:
        return True
    mask = np.zeros(height * width, dtype=np.uint8)
    mask[pixels] = 1
    return len(oracle_connected_components(mask.reshape(height, width))) == 1


def _apply_illumination(
    cfg: SynthConfig,
    rng: Xoshiro256StarStar,
    placer: "_Placer",
    sem1: np.ndarray,
    sem2: np.ndarray,
    objects: Iterable[PlantedObject],
) -> None:
    illum = cfg.illumination
    assert illum is not None
    present_both = [
        c for c in range(cfg.categories)
        if any(o.pixels_t1 is not None and o.category == c for o in objects)
        and any(o.pixels_t2 is not None and o.category == c for o in objects)
    ]
    for obj in objects:
        if obj.change != "none" or obj.pixels_t1 is None:
            continue
        pixels = obj.pixels_t1
        if pixels.size < 12:
            continue
        dip_k = int(round(illum.dip_fraction * pixels.size))
        # The sorted pixel array makes pixels[:k] a top strip of the object;
        # only dip when the rest of the footprint stays one component.
        if dip_k and not _pixels_stay_connected(pixels[dip_k:], cfg.height, cfg.width):
            dip_k = 0
        if dip_k:
            sem1[obj.category].reshape(-1)[pixels[:dip_k]] = DIP_T1_LEVEL
            sem2[obj.category].reshape(-1)[pixels[:dip_k]] = DIP_T2_LEVEL
        if illum.ghost_fraction and present_both:
            target = max(4, int(round(illum.ghost_fraction * pixels.size)))
            side = max(2, int(np.sqrt(target)))
            zone = placer.place_rect(side, max(2, -(-target // side)))
            if zone is not None:
                ghost_category = present_both[rng.randint(0, len(present_both) - 1)]
                sem2[ghost_category].reshape(-1)[zone] = GHOST_LEVEL


def generate_scene(cfg: SynthConfig) -> GeneratedScene:
    """Fully deterministic: identical configs give bit-identical scenes.

    The PRNG stream is consumed in a fixed order (geometry first, then
    noise), and zero-amplitude noise consumes no draws, so varying only the
    noise knobs keeps the planted geometry identical.
    """
    rng = Xoshiro256StarStar(cfg.seed)
    placer = _Placer(cfg.height, cfg.width, rng)
    objects = _plant_objects(cfg, rng, placer)
    c, h, w = cfg.categories, cfg.height, cfg.width

    sem1 = np.full((c, h, w), BACKGROUND_LEVEL, dtype=np.float64)
    sem2 = np.full((c, h, w), BACKGROUND_LEVEL, dtype=np.float64)
    for obj in objects:
        if obj.pixels_t1 is not None:
            sem1[obj.category].reshape(-1)[obj.pixels_t1] = INTERIOR_LEVEL
        if obj.pixels_t2 is not None:
            sem2[obj.category].reshape(-1)[obj.pixels_t2] = INTERIOR_LEVEL
    if cfg.illumination is not None:
        _apply_illumination(cfg, rng, placer, sem1, sem2, objects)

    presence = np.zeros((2, c), dtype=np.float64)
    for obj in objects:
        if obj.pixels_t1 is not None:
            presence[0, obj.category] = 1.0
        if obj.pixels_t2 is not None:
            presence[1, obj.category] = 1.0
    if cfg.presence_flip > 0:
        for t in range(2):
            for cat in range(c):
                if rng.random() < cfg.presence_flip:
                    presence[t, cat] = 1.0 - presence[t, cat]

    snapshots = []
    for t, (sem, pixel_attr) in enumerate(((sem1, "pixels_t1"), (sem2, "pixels_t2"))):
        queries = []
        for obj in objects:
            pixels = getattr(obj, pixel_attr)
            if pixels is None:
                continue
            qmap = np.zeros(h * w, dtype=np.float64)
            qmap[pixels] = QUERY_LEVEL
            confidence = 1.0
            if cfg.confidence_jitter > 0:
                confidence = 1.0 - cfg.confidence_jitter * rng.random()
            queries.append(
                InstanceQuery(map=qmap.reshape(h, w).astype(np.float32), confidence=confidence)
            )
        if cfg.semantic_jitter > 0:
            noise = rng.uniform_array(c * h * w, -cfg.semantic_jitter, cfg.semantic_jitter)
            sem = np.clip(sem + noise.reshape(c, h, w), 0.0, 1.0)
        snapshots.append(
            SceneSnapshot(
                semantic=sem.astype(np.float32),
                queries=tuple(queries),
                presence=presence[t].copy(),
            )
        )

    ground_truth = np.zeros((c, h, w), dtype=np.uint8)
    for obj in objects:
        if obj.change == "none":
            continue
        for pixels in (obj.pixels_t1, obj.pixels_t2):
            if pixels is not None:
                ground_truth[obj.category].reshape(-1)[pixels] = 1

    pair = ScenePair(
        pair_id=f"synth-{cfg.seed & 0xFFFFFFFFFFFFFFFF:016x}",
        height=h,
        width=w,
        vocabulary=vocabulary_for(c),
        t1=snapshots[0],
        t2=snapshots[1],
        ground_truth=ground_truth,
    )
    return GeneratedScene(pair=pair, ground_truth=ground_truth, objects=tuple(objects))


def generate_scene_pair(cfg: SynthConfig) -> tuple[ScenePair, np.ndarray]:
    scene = generate_scene(cfg)
    return scene.pair, scene.ground_truth


# ---------------------------------------------------------------------------
# Brute-force reference implementations


def oracle_connected_components(mask: np.ndarray, category: int = 0) -> InstanceSet:
    """Breadth-first flood fill from each unvisited foreground pixel, in
    row-major order. O(H*W), obviously correct, used as the labeling oracle."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeMismatchError(f"mask must be 2-D, got shape {mask.shape}")
    height, width = mask.shape
    fg = mask.ravel() != 0
    visited = np.zeros(height * width, dtype=bool)
    instances = []
    for start in np.flatnonzero(fg):
        if visited[start]:
            continue
        found = [int(start)]
        visited[start] = True
        queue = deque(found)
        while queue:
            p = queue.popleft()
            r, c = divmod(p, width)
            for dr, dc in _NEIGHBORS_8:
                nr, nc = r + dr, c + dc
                if 0 <= nr < height and 0 <= nc < width:
                    q = nr * width + nc
                    if fg[q] and not visited[q]:
                        visited[q] = True
                        found.append(q)
                        queue.append(q)
        found.sort()
        instances.append(
            Instance(
                label_id=len(instances) + 1,
                category=category,
                pixels=np.array(found, dtype=np.int64),
            )
        )
    return InstanceSet(height=height, width=width, category=category, instances=tuple(instances))


def oracle_change_mask(m1: np.ndarray, m2: np.ndarray, tau: float) -> np.ndarray:
    """Literal quadratic transcription of the matching rule: every pairwise
    coverage fraction via explicit pixel-set intersection, forward and
    backward checks, union of the unmatched instances."""
    m1 = np.asarray(m1)
    m2 = np.asarray(m2)
    if m1.shape != m2.shape:
        raise ShapeMismatchError(f"mask shapes differ: {m1.shape} vs {m2.shape}")
    comps1 = [frozenset(inst.pixels.tolist()) for inst in oracle_connected_components(m1).instances]
    comps2 = [frozenset(inst.pixels.tolist()) for inst in oracle_connected_components(m2).instances]

    changed: set[int] = set()
    for a in comps1:
        if not any(len(a & b) / len(a) >= tau for b in comps2):
            changed |= a
    for b in comps2:
        if not any(len(b & a) / len(b) >= tau for a in comps1):
            changed |= b

    out = np.zeros(m1.size, dtype=np.uint8)
    if changed:
        out[sorted(changed)] = 1
    return out.reshape(m1.shape)
