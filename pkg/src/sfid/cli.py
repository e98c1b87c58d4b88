"""Command-line entry point.

Subcommands:

    sfid run    --input DIR_OR_MANIFEST --out DIR [--strategy instance|pmc|l1|l2] ...
    sfid eval   --pred DIR --gt DIR [--out DIR]
    sfid synth  --out DIR --pairs N --seed S [...]

`run` accepts an optional --config JSON file whose keys mirror the long
options (underscored); explicit flags win over the file. Worker count falls
back to the SFID_WORKERS environment variable when the flag is absent.

Exit codes: 0 success, 1 partial pair failures, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import ConfigError, SfidError
from .metrics import format_report_table
from .pipeline import (
    RunConfig,
    STRATEGIES,
    WORKERS_ENV_VAR,
    category_slug,
    discover_manifests,
    run_eval,
    run_pipeline,
)
from .synthetic import IlluminationConfig, SynthConfig, generate_scene
from .tensor_store import save_scene_pair, write_tensor

_RUN_DEFAULTS = {
    "strategy": "instance",
    "tau_match": 0.5,
    "background_threshold": 0.5,
    "min_area": 0,
    "baseline_threshold": 0.5,
    "vocabulary": None,
    "workers": None,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfid",
        description="Bi-temporal change detection over serialized segmentation head outputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="process scene pairs into change masks")
    run.add_argument("--input", action="append", required=True,
                     help="manifest file or directory of scene pairs (repeatable)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--config", help="JSON file with defaults for the options below")
    run.add_argument("--strategy", choices=STRATEGIES)
    run.add_argument("--tau-match", type=float,
                     help="coverage threshold above which an instance counts as unchanged")
    run.add_argument("--background-threshold", type=float,
                     help="gated probability below which a pixel is background")
    run.add_argument("--min-area", type=int, help="drop instances smaller than this")
    run.add_argument("--baseline-threshold", type=float,
                     help="normalized distance threshold for the l1/l2 strategies")
    run.add_argument("--category", action="append", dest="vocabulary",
                     help="restrict processing to this category (repeatable)")
    run.add_argument("--workers", type=int,
                     help=f"worker threads (default: ${WORKERS_ENV_VAR} or 1)")

    ev = sub.add_parser("eval", help="score predicted masks against ground truth")
    ev.add_argument("--pred", required=True, help="directory of predicted masks")
    ev.add_argument("--gt", required=True, help="directory of ground-truth masks")
    ev.add_argument("--out", help="directory for report.json and report.txt")

    synth = sub.add_parser("synth", help="generate synthetic scene pairs")
    synth.add_argument("--out", required=True)
    synth.add_argument("--pairs", type=int, default=10)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--height", type=int, default=64)
    synth.add_argument("--width", type=int, default=64)
    synth.add_argument("--categories", type=int, default=2)
    synth.add_argument("--min-objects", type=int, default=3)
    synth.add_argument("--max-objects", type=int, default=6)
    synth.add_argument("--change-fraction", type=float, default=0.3)
    synth.add_argument("--semantic-jitter", type=float, default=0.0)
    synth.add_argument("--confidence-jitter", type=float, default=0.0)
    synth.add_argument("--presence-flip", type=float, default=0.0)
    synth.add_argument("--blob-fraction", type=float, default=0.5)
    synth.add_argument("--illumination", action="store_true",
                       help="inject illumination-style pseudo-changes on unchanged objects")
    return parser


def _merged_run_value(args: argparse.Namespace, file_cfg: dict, key: str):
    flag = getattr(args, key)
    if flag is not None:
        return flag
    if key in file_cfg:
        return file_cfg[key]
    return _RUN_DEFAULTS[key]


def _cmd_run(args: argparse.Namespace) -> int:
    file_cfg: dict = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config file {args.config} must hold a JSON object")
        unknown = set(file_cfg) - set(_RUN_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    manifests: list[Path] = []
    for item in args.input:
        manifests.extend(discover_manifests(item))

    workers = _merged_run_value(args, file_cfg, "workers")
    if workers is None:
        env = os.environ.get(WORKERS_ENV_VAR)
        if env is not None:
            try:
                workers = int(env)
            except ValueError:
                raise ConfigError(f"{WORKERS_ENV_VAR}={env!r} is not an integer") from None
        else:
            workers = 1

    vocabulary = _merged_run_value(args, file_cfg, "vocabulary")
    cfg = RunConfig(
        manifests=tuple(manifests),
        output_dir=Path(args.out),
        strategy=_merged_run_value(args, file_cfg, "strategy"),
        tau_match=_merged_run_value(args, file_cfg, "tau_match"),
        background_threshold=_merged_run_value(args, file_cfg, "background_threshold"),
        min_area=_merged_run_value(args, file_cfg, "min_area"),
        baseline_threshold=_merged_run_value(args, file_cfg, "baseline_threshold"),
        vocabulary=tuple(vocabulary) if vocabulary is not None else None,
        workers=workers,
    )
    result = run_pipeline(cfg)
    ok = len(result.outcomes) - len(result.failures)
    print(f"processed {ok}/{len(result.outcomes)} pairs -> {result.output_dir}")
    for outcome in result.failures:
        print(f"  FAILED {outcome.manifest}: {outcome.error}", file=sys.stderr)
    return 1 if result.failures else 0


def _cmd_eval(args: argparse.Namespace) -> int:
    report = run_eval(args.pred, args.gt)
    table = format_report_table(report)
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
        (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    scenes_dir = out / "scenes"
    gt_dir = out / "gt"
    gt_dir.mkdir(parents=True, exist_ok=True)
    illumination = IlluminationConfig() if args.illumination else None
    for i in range(args.pairs):
        cfg = SynthConfig(
            seed=args.seed + i,
            height=args.height,
            width=args.width,
            categories=args.categories,
            objects_per_image=(args.min_objects, args.max_objects),
            change_fraction=args.change_fraction,
            semantic_jitter=args.semantic_jitter,
            confidence_jitter=args.confidence_jitter,
            presence_flip=args.presence_flip,
            blob_fraction=args.blob_fraction,
            illumination=illumination,
        )
        scene = generate_scene(cfg)
        pair = scene.pair
        save_scene_pair(pair, scenes_dir / pair.pair_id)
        for c, name in enumerate(pair.vocabulary):
            write_tensor(gt_dir / f"{pair.pair_id}.{category_slug(name)}.sfid",
                         scene.ground_truth[c])
    print(f"generated {args.pairs} pairs under {scenes_dir} (ground truth in {gt_dir})")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "eval":
            return _cmd_eval(args)
        return _cmd_synth(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SfidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
