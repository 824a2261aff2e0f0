"""Extraction CLI: `extract --model M [--layer L] --audio DIR --out DIR`."""

from __future__ import annotations

import argparse
import logging
import sys

from .extract import ExtractionSpec, extract
from .models import MODEL_REGISTRY

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract", description="Convert an audio corpus into FTPK feature files."
    )
    parser.add_argument("--model", required=True, choices=[*sorted(MODEL_REGISTRY), "mfcc"])
    parser.add_argument("--layer", type=int, default=None, help="transformer layer (1-indexed)")
    parser.add_argument("--audio", required=True, help="directory of 16 kHz mono WAV files")
    parser.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = ExtractionSpec(model=args.model, audio_dir=args.audio, out_dir=args.out, layer=args.layer)
        manifest = extract(spec)
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        logger.error("%s", exc)
        return 1
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
