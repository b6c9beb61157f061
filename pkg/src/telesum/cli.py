"""Command-line surface for the event-summary pipeline."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .pipeline import MissingInputError, PipelineConfig, PipelineError


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="pipeline config file (JSON)")
    p.add_argument("--out-dir", help="override output directory")
    p.add_argument("--seed", type=int, help="override global seed")
    p.add_argument("--k", type=float, help="new-scene trigger threshold")
    p.add_argument("--m", type=float, help="previous-scene suppression threshold")
    p.add_argument("--margin-seconds", type=int, help="evaluation margin in seconds")
    p.add_argument("--window-seconds", type=float, help="weak-label window in seconds")
    p.add_argument("--confidence-threshold", type=float, help="frame-selection face confidence")
    p.add_argument("--frames-per-character", type=int)
    p.add_argument("--dedupe", action="store_true", default=None, help="collapse retweet duplicates")
    p.add_argument("--loss", choices=pipeline.partial_label.LOSSES)
    p.add_argument("--schedule", choices=pipeline.partial_label.SCHEDULES)
    relabel = p.add_mutually_exclusive_group()
    relabel.add_argument("--relabel", dest="relabel", action="store_true", default=None)
    relabel.add_argument("--no-relabel", dest="relabel", action="store_false")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--epochs-per-stage", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--relabel-iterations", type=int)


def _overrides(args: argparse.Namespace) -> dict:
    train = {
        "loss": args.loss,
        "schedule": args.schedule,
        "relabel": args.relabel,
        "learning_rate": args.learning_rate,
        "epochs_per_stage": args.epochs_per_stage,
        "batch_size": args.batch_size,
        "seed": args.seed,
        "relabel_iterations": args.relabel_iterations,
    }
    return {
        "out_dir": args.out_dir,
        "seed": args.seed,
        "k": args.k,
        "m": args.m,
        "margin_seconds": args.margin_seconds,
        "window_seconds": args.window_seconds,
        "confidence_threshold": args.confidence_threshold,
        "frames_per_character": args.frames_per_character,
        "dedupe": args.dedupe,
        "train": {k: v for k, v in train.items() if v is not None},
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="telesum",
        description="Segment a televised event into scenes from social-stream "
        "commentary and pair each scene with a tweet and video frames.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full pipeline")
    _add_common_flags(run)
    run.add_argument("--resume", action="store_true", help="skip stages with cached outputs")
    run.add_argument("--stage", choices=pipeline.STAGES, help="run a single stage only")

    for name in pipeline.STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        _add_common_flags(p)
        p.add_argument("--resume", action="store_true")
        if name == "detect-scenes":
            p.add_argument("--baseline", choices=("volume", "meanstd"))

    ev = sub.add_parser("eval-scenes", help="score detected scenes against gold intervals")
    _add_common_flags(ev)
    ev.add_argument("--baseline", choices=("volume", "meanstd"))

    ef = sub.add_parser("eval-faces", help="score the face model on annotated test faces")
    _add_common_flags(ef)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = PipelineConfig.from_file(Path(args.config), overrides=_overrides(args))
        if args.command == "run":
            pipeline.run_pipeline(cfg, resume=args.resume, only_stage=args.stage)
        elif args.command == "eval-scenes":
            report = pipeline.stage_eval_scenes(cfg, baseline=args.baseline)
            print(
                f"precision={report.precision:.4f} recall={report.recall:.4f} "
                f"f1={report.f1:.4f}"
            )
        elif args.command == "eval-faces":
            report = pipeline.stage_eval_faces(cfg)
            print(f"micro_accuracy={report.micro_accuracy:.4f} pearson_r={report.pearson_r}")
        elif args.command == "detect-scenes" and getattr(args, "baseline", None):
            pipeline.run_pipeline(cfg, resume=args.resume, only_stage="ingest")
            pipeline.stage_detect_scenes(cfg, resume=args.resume, baseline=args.baseline)
        else:
            pipeline.run_pipeline(cfg, resume=args.resume, only_stage=args.command)
    except MissingInputError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (PipelineError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
