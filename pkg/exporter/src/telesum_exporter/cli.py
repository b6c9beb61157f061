"""Command line for batch exports."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .detectors import DetectorError, make_detector
from .encoders import (
    EncoderError,
    FACE_ENCODERS,
    IMAGE_ENCODERS,
    TEXT_ENCODERS,
    make_encoder,
)
from .export import ExportError, export_frames_and_faces, export_tweets


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="telesum-export",
        description="Turn raw tweets and media into the pipeline's vector files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    tw = sub.add_parser("export-tweets", help="message file -> tweet vector file")
    tw.add_argument("--messages", required=True)
    tw.add_argument("--out", required=True)
    tw.add_argument("--encoder", default="hashing", choices=sorted(TEXT_ENCODERS))

    fr = sub.add_parser(
        "export-frames", help="frame directory or video -> frame + face vector files"
    )
    fr.add_argument("--input", required=True, help="directory of stills or a video file")
    fr.add_argument("--out-frames", required=True)
    fr.add_argument("--out-faces", required=True)
    fr.add_argument("--image-encoder", default="hashing", choices=sorted(IMAGE_ENCODERS))
    fr.add_argument("--face-encoder", default="hashing", choices=sorted(FACE_ENCODERS))
    fr.add_argument("--detector", default="sidecar", choices=("sidecar", "haar"))
    fr.add_argument("--sidecar", help="JSON file of face boxes per frame name")
    fr.add_argument("--start-epoch", type=int, default=0, help="epoch second of media time 0")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export-tweets":
            encoder = make_encoder(TEXT_ENCODERS, args.encoder)
            result = export_tweets(Path(args.messages), Path(args.out), encoder)
            print(f"wrote {result.records} tweet vectors ({len(result.skipped)} skipped)")
        else:
            detector = make_detector(
                args.detector, sidecar=Path(args.sidecar) if args.sidecar else None
            )
            result = export_frames_and_faces(
                Path(args.input),
                Path(args.out_frames),
                Path(args.out_faces),
                image_encoder=make_encoder(IMAGE_ENCODERS, args.image_encoder),
                face_encoder=make_encoder(FACE_ENCODERS, args.face_encoder),
                detector=detector,
                start_epoch=args.start_epoch,
            )
            print(
                f"wrote {result.records} records "
                f"({len(result.flagged_frames)} crowded frames, "
                f"{len(result.skipped)} skipped)"
            )
    except (ExportError, EncoderError, DetectorError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
