"""Command line: export one bi-temporal pair.

    sfid-export --t1 before.png --t2 after.png --prompts building,water \
        --backend mock --out scene0/ [--seed 7] [--pair-id scene0]

The model backend takes --model-ref package.module:function naming an
adapter that maps (image_path, prompts, device) to head outputs.
"""

from __future__ import annotations

import argparse
import sys

from .backends import BackendDescriptor, BackendError
from .export import ExportError, export_pair


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfid-export",
        description="Write segmentation head outputs for an image pair in the SFID formats.",
    )
    parser.add_argument("--t1", required=True, help="earlier image")
    parser.add_argument("--t2", required=True, help="later image")
    parser.add_argument("--prompts", required=True,
                        help="comma-separated concept prompts, e.g. building,water")
    parser.add_argument("--backend", choices=("mock", "model"), default="mock")
    parser.add_argument("--out", required=True, help="output directory for the scene pair")
    parser.add_argument("--seed", type=int, default=0, help="mock backend seed")
    parser.add_argument("--model-ref", help="adapter for the model backend: package.module:function")
    parser.add_argument("--device", help="device hint passed to the model adapter")
    parser.add_argument("--pair-id", help="override the derived pair id")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    prompts = tuple(p.strip() for p in args.prompts.split(",") if p.strip())
    try:
        descriptor = BackendDescriptor(
            name=args.backend,
            prompts=prompts,
            model_ref=args.model_ref,
            device=args.device,
            seed=args.seed,
        )
        manifest = export_pair(args.t1, args.t2, descriptor, args.out, pair_id=args.pair_id)
    except (BackendError, ExportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
