"""Command line: ssl-extract --model <id> --layers 9,10,11 --in <dir> --out <dir>."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ModelLoadError
from .extract import DEFAULT_LAYERS, ExtractJob, extract


def parse_layers(text: str) -> tuple[int, ...]:
    try:
        layers = tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad layer list {text!r}")
    if not layers:
        raise argparse.ArgumentTypeError("layer list is empty")
    return layers


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssl-extract",
        description="Dump averaged hidden layers of a pretrained speech "
                    "encoder as SSLF feature files.",
    )
    parser.add_argument("--model", required=True,
                        help="model hub id or local model directory")
    parser.add_argument("--layers", type=parse_layers,
                        default=DEFAULT_LAYERS,
                        help="comma-separated 1-based transformer layers "
                             "(default 9,10,11)")
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="directory of 16 kHz mono WAV files")
    parser.add_argument("--out", dest="out_dir", required=True,
                        help="output directory for SSLF files")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        print(f"error: input directory not found: {in_dir}", file=sys.stderr)
        return 2
    wavs = sorted(in_dir.glob("*.wav"))
    if not wavs:
        print(f"error: no .wav files under {in_dir}", file=sys.stderr)
        return 2
    job = ExtractJob(audio_paths=wavs, model_id=args.model,
                     out_dir=Path(args.out_dir), layers=args.layers)
    try:
        result = extract(job)
    except ModelLoadError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path, reason in result.failures:
        print(f"skipped {path}: {reason}", file=sys.stderr)
    print(f"wrote {len(result.written)} SSLF files to {args.out_dir} "
          f"({len(result.failures)} skipped)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
