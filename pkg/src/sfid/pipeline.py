"""Batch pipeline: manifests in, per-category change masks and reports out.

Each scene pair is processed independently (fuse and label both times,
binarize per category, decouple, match, assemble) and its masks are written
as `<pair_id>.<category>.sfid` uint8 tensors, so partial results stay
directly diffable. A failed pair is recorded and skipped rather than
aborting the whole run. Pair ids must be unique across a run.

Pairs run on a bounded thread pool; they share nothing, so the output bytes
do not depend on the worker count. The run manifest echoes every effective
parameter (defaults included) to make runs replayable; it also records
per-pair wall-clock timing, which is the one intentionally nondeterministic
artifact of a run.
"""

from __future__ import annotations

import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
import numpy as np

from .errors import ConfigError, EvalInputError
from .fusion import (
    aggregate_instances,
    apply_presence_gate,
    binarize_category,
    fuse_semantic_instance,
    label_gated,
)
from .matching import (
    MatchConfig,
    detect_changes_instance,
    detect_changes_logit,
    detect_changes_pmc,
)
from .metrics import ConfusionCounts, EvalReport, build_report, confusion_counts
from .tensor_store import ScenePair, SceneSnapshot, load_scene_pair, read_tensor, write_tensor

STRATEGIES = ("instance", "pmc", "l1", "l2")
WORKERS_ENV_VAR = "SFID_WORKERS"
MASKS_SUBDIR = "masks"
RUN_MANIFEST_NAME = "run_manifest.json"


def category_slug(name: str) -> str:
    """Filename-safe category token used in mask file names."""
    return re.sub(r"[^A-Za-z0-9_-]+", "_", name)


@dataclass(frozen=True)
class RunConfig:
    manifests: tuple[Path, ...]
    output_dir: Path
    strategy: str = "instance"
    tau_match: float = 0.5
    background_threshold: float = 0.5
    min_area: int = 0
    baseline_threshold: float = 0.5
    vocabulary: tuple[str, ...] | None = None
    workers: int = 1

    def validate(self) -> None:
        if not self.manifests:
            raise ConfigError("no input manifests")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if not 0.0 < self.tau_match <= 1.0:
            raise ConfigError(f"tau_match must be in (0, 1], got {self.tau_match}")
        if not 0.0 <= self.background_threshold <= 1.0:
            raise ConfigError(
                f"background_threshold must be in [0, 1], got {self.background_threshold}"
            )
        if self.min_area < 0:
            raise ConfigError(f"min_area must be non-negative, got {self.min_area}")
        if self.baseline_threshold < 0:
            raise ConfigError(
                f"baseline_threshold must be non-negative, got {self.baseline_threshold}"
            )
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")

    def echo(self) -> dict:
        """Every effective parameter, defaults included."""
        return {
            "manifests": [str(p) for p in self.manifests],
            "output_dir": str(self.output_dir),
            "strategy": self.strategy,
            "tau_match": self.tau_match,
            "background_threshold": self.background_threshold,
            "min_area": self.min_area,
            "baseline_threshold": self.baseline_threshold,
            "vocabulary": list(self.vocabulary) if self.vocabulary is not None else None,
            "workers": self.workers,
        }


@dataclass(frozen=True)
class PairOutcome:
    pair_id: str
    manifest: str
    status: str  # "ok" | "failed"
    seconds: float
    categories: tuple[str, ...] = ()
    error: str | None = None


@dataclass(frozen=True)
class RunResult:
    outcomes: tuple[PairOutcome, ...]
    output_dir: Path
    run_manifest: Path

    @property
    def failures(self) -> tuple[PairOutcome, ...]:
        return tuple(o for o in self.outcomes if o.status != "ok")


def discover_manifests(path: str | Path) -> tuple[Path, ...]:
    """A manifest file itself, or every `manifest.json` under a directory."""
    path = Path(path)
    if path.is_file():
        return (path,)
    if path.is_dir():
        found = tuple(sorted(path.rglob("manifest.json")))
        if not found:
            raise ConfigError(f"no manifest.json files under {path}")
        return found
    raise ConfigError(f"input not found: {path}")


def _label_snapshot(
    snap: SceneSnapshot, num_categories: int, height: int, width: int, threshold: float
) -> tuple[np.ndarray, np.ndarray]:
    """Fuse one time's heads; returns (label map, gated probability stack)."""
    agg = aggregate_instances(snap.queries, height, width)
    fused = np.stack(
        [fuse_semantic_instance(snap.semantic[i], agg) for i in range(num_categories)]
    )
    gated = apply_presence_gate(fused, snap.presence)
    labels = label_gated(gated, threshold)
    return labels, gated


def process_scene_pair(pair: ScenePair, cfg: RunConfig) -> dict[str, np.ndarray]:
    """Per-category binary change masks for one pair, keyed by category name."""
    c, h, w = pair.num_categories, pair.height, pair.width
    if cfg.vocabulary is None:
        selected = list(enumerate(pair.vocabulary))
    else:
        index_of = {name: i for i, name in enumerate(pair.vocabulary)}
        unknown = [name for name in cfg.vocabulary if name not in index_of]
        if unknown:
            raise ConfigError(
                f"pair {pair.pair_id}: categories {unknown} not in vocabulary {pair.vocabulary}"
            )
        selected = [(index_of[name], name) for name in cfg.vocabulary]

    labels1, gated1 = _label_snapshot(pair.t1, c, h, w, cfg.background_threshold)
    labels2, gated2 = _label_snapshot(pair.t2, c, h, w, cfg.background_threshold)

    shared = None
    if cfg.strategy in ("l1", "l2"):
        # The logit distance sums over all categories, so the mask is
        # class-agnostic; it is emitted once per requested category.
        shared = detect_changes_logit(gated1, gated2, cfg.strategy, cfg.baseline_threshold)

    masks: dict[str, np.ndarray] = {}
    match_cfg = MatchConfig(tau_match=cfg.tau_match, min_area=cfg.min_area)
    for index, name in selected:
        if cfg.strategy == "instance":
            mask = detect_changes_instance(
                binarize_category(labels1, index, c),
                binarize_category(labels2, index, c),
                match_cfg,
            )
        elif cfg.strategy == "pmc":
            mask = detect_changes_pmc(labels1, labels2, index)
        else:
            mask = shared
        masks[name] = mask
    return masks


def run_pipeline(cfg: RunConfig) -> RunResult:
    cfg.validate()
    masks_dir = Path(cfg.output_dir) / MASKS_SUBDIR
    masks_dir.mkdir(parents=True, exist_ok=True)

    def work(manifest_path: Path) -> PairOutcome:
        started = time.perf_counter()
        try:
            pair = load_scene_pair(manifest_path)
            masks = process_scene_pair(pair, cfg)
            for name, mask in masks.items():
                write_tensor(masks_dir / f"{pair.pair_id}.{category_slug(name)}.sfid", mask)
            return PairOutcome(
                pair_id=pair.pair_id,
                manifest=str(manifest_path),
                status="ok",
                seconds=time.perf_counter() - started,
                categories=tuple(masks),
            )
        except Exception as exc:  # a broken pair must not take down the batch
            return PairOutcome(
                pair_id=manifest_path.parent.name,
                manifest=str(manifest_path),
                status="failed",
                seconds=time.perf_counter() - started,
                error=f"{type(exc).__name__}: {exc}",
            )

    if cfg.workers == 1:
        outcomes = [work(m) for m in cfg.manifests]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(work, cfg.manifests))
    outcomes.sort(key=lambda o: (o.pair_id, o.manifest))

    run_manifest = Path(cfg.output_dir) / RUN_MANIFEST_NAME
    run_manifest.write_text(
        json.dumps(
            {
                "config": cfg.echo(),
                "pairs": [
                    {
                        "pair_id": o.pair_id,
                        "manifest": o.manifest,
                        "status": o.status,
                        "seconds": o.seconds,
                        "categories": list(o.categories),
                        "error": o.error,
                    }
                    for o in outcomes
                ],
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return RunResult(outcomes=tuple(outcomes), output_dir=Path(cfg.output_dir), run_manifest=run_manifest)


def _scan_masks(directory: Path) -> dict[tuple[str, str], Path]:
    """Map (pair_id, category slug) to mask path for every *.sfid file."""
    masks: dict[tuple[str, str], Path] = {}
    for path in sorted(directory.glob("*.sfid")):
        stem = path.name[: -len(".sfid")]
        pair_id, dot, slug = stem.rpartition(".")
        if not dot or not pair_id or not slug:
            raise EvalInputError(f"cannot parse mask name {path.name!r} as <pair_id>.<category>.sfid")
        masks[(pair_id, slug)] = path
    return masks


def run_eval(pred_dir: str | Path, gt_dir: str | Path) -> EvalReport:
    """Micro-averaged per-category scores of predictions against ground truth.

    Both directories hold `<pair_id>.<category>.sfid` uint8 masks and must
    contain exactly the same (pair, category) keys.
    """
    preds = _scan_masks(Path(pred_dir))
    gts = _scan_masks(Path(gt_dir))
    if not gts:
        raise EvalInputError(f"no ground-truth masks in {gt_dir}")
    missing = sorted(gts.keys() - preds.keys())
    extra = sorted(preds.keys() - gts.keys())
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing predictions for {missing[:5]}")
        if extra:
            parts.append(f"predictions without ground truth: {extra[:5]}")
        raise EvalInputError("; ".join(parts))

    counts: dict[str, ConfusionCounts] = {}
    for (pair_id, slug), gt_path in sorted(gts.items()):
        gt = read_tensor(gt_path)
        pred = read_tensor(preds[(pair_id, slug)])
        counts[slug] = counts.get(slug, ConfusionCounts()) + confusion_counts(pred, gt)
    return build_report(counts)
