"""Export CLI: `fragvqa-export motion|spatial --out <models-dir> [...]`."""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .export import ParityError, export_motion_backbone, export_spatial_backbone


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fragvqa-export",
        description="Export headless pooled backbones to TorchScript for fragvqa",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("motion", help="dual-pathway R50-3D motion backbone (2304-d)")
    p.add_argument("--out", required=True, help="models directory (manifest.json is updated)")
    p.add_argument("--resolution", type=int, default=224, choices=[224, 384])
    p.add_argument("--seed", type=int, default=0, help="init seed when no weights given")
    p.add_argument("--weights", help="local state-dict file with pretrained parameters")

    s = sub.add_parser("spatial", help="hierarchical transformer spatial backbone")
    s.add_argument("--out", required=True)
    s.add_argument("--variant", default="base", choices=["tiny", "small", "base", "large"])
    s.add_argument("--resolution", type=int, default=224, choices=[224, 384])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--weights", help="local state-dict file with pretrained parameters")
    s.add_argument("--pretrained", action="store_true",
                   help="download the published torchvision checkpoint (tiny/small/base)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "motion":
            manifest = export_motion_backbone(
                args.out, resolution=args.resolution, seed=args.seed, weights=args.weights)
        else:
            manifest = export_spatial_backbone(
                args.out, variant=args.variant, resolution=args.resolution,
                seed=args.seed, weights=args.weights, pretrained=args.pretrained)
    except ParityError as exc:
        print(f"parity check failed, no manifest written: {exc}", file=sys.stderr)
        return 2
    keys = ", ".join(sorted(manifest))
    print(f"manifest updated ({keys})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
