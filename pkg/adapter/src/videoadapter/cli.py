"""Command-line interface: `adapter extract` and `adapter batch`.

Exit codes match the pipeline convention: 0 success, 1 usage error,
2 data error, 3 internal failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .detectors import AdapterError
from .extract import AdapterConfig, batch_extract, extract_record

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_detector_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--detector", default="dlib", help="detector backend name (default: dlib)")
    p.add_argument("--model", help="detector model file (e.g. dlib shape predictor)")
    p.add_argument("--stride", type=int, default=1, help="keep every Nth frame")
    p.add_argument("--min-face-fraction", type=float, default=0.9,
                   help="required fraction of frames with a detected face")


def _build_parser() -> _Parser:
    parser = _Parser(prog="adapter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="convert one video into an interchange JSON file")
    p.add_argument("video")
    p.add_argument("-o", "--output", required=True)
    _add_detector_args(p)

    p = sub.add_parser("batch", help="convert a raw-video manifest into a corpus directory")
    p.add_argument("manifest", help="CSV with header video_id,path,engagement")
    p.add_argument("-o", "--output", required=True, help="output directory")
    _add_detector_args(p)
    return parser


def _config(args) -> AdapterConfig:
    return AdapterConfig(
        detector=args.detector,
        detector_model=args.model,
        frame_stride=args.stride,
        min_face_fraction=args.min_face_fraction,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if args.command == "extract":
            doc, stats = extract_record(args.video, _config(args))
            Path(args.output).write_text(json.dumps(doc, separators=(",", ":")), encoding="utf-8")
            print(f"wrote {args.output}: {stats.summary()}")
        else:
            manifest, failures = batch_extract(args.manifest, _config(args), args.output)
            print(f"wrote {manifest} ({len(failures)} failed)")
            for vid, err in failures:
                print(f"  failed {vid}: {err}", file=sys.stderr)
        return EXIT_OK
    except AdapterError as e:
        print(f"adapter: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # pragma: no cover
        print(f"adapter: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
