"""Command-line exporter: --manifest (repeatable), --encoder, --dim, --batch, --out."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .encoders import ENCODERS
from .export import ExportJob, export
from .manifest import ManifestError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embed-export", description=__doc__)
    parser.add_argument("--manifest", action="append", required=True,
                        help="sample manifest JSONL (may be given multiple times)")
    parser.add_argument("--encoder", required=True,
                        help=f"encoder name, one of {sorted(ENCODERS)}")
    parser.add_argument("--dim", type=int, default=None,
                        help="declared output dim; must match the encoder's hidden size")
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--out", required=True, help="output LTEB path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    for path in args.manifest:
        if not Path(path).exists():
            print(f"embed-export: manifest not found: {path}", file=sys.stderr)
            return 1
    job = ExportJob(
        manifest_paths=tuple(args.manifest),
        encoder_name=args.encoder,
        out_path=args.out,
        dim=args.dim,
        batch_size=args.batch,
    )
    try:
        n = export(job)
    except (KeyError, ValueError, ManifestError) as exc:
        print(f"embed-export: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"embed-export: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {n} records to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
