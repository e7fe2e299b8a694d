"""Command line interface: one subcommand, ``export --config export.json``."""

from __future__ import annotations

import argparse
import sys

from .config import ExportConfig
from .errors import ExportError
from .export import export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="Export frozen-encoder embeddings as a feature-store dataset.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="run one export from a JSON config")
    p.add_argument("--config", required=True, help="export config JSON")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ExportConfig.from_json(args.config)
        if args.out:
            doc = {**config.__dict__, "output_dir": args.out}
            config = ExportConfig.from_dict(doc)
        out = export(config)
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    print(f"wrote dataset -> {out}")
    return 0


def entrypoint() -> None:
    sys.exit(main())
