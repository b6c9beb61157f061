"""Staged batch pipeline: ingest -> detect -> select -> train -> label -> summarize.

Every stage writes its outputs under the configured output directory so runs
can resume, individual stages can be re-run, and two runs with the same
config and seed produce byte-identical files.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import corpus, frame_select, jsonl, partial_label, scenes, tweet_select, weak_labels

log = logging.getLogger(__name__)

STAGES = (
    "ingest",
    "detect-scenes",
    "select-tweets",
    "weak-label",
    "train-faces",
    "select-frames",
    "summarize",
)


class PipelineError(RuntimeError):
    pass


class MissingInputError(PipelineError):
    def __init__(self, path: Path):
        super().__init__(f"missing input file: {path}")
        self.path = path


@dataclass
class PipelineConfig:
    messages: str = ""
    aliases: str = ""
    tweet_vectors: str = ""
    frame_vectors: str = ""
    face_vectors: str = ""
    subtitles: str = ""
    transcript: str = ""
    speaking_intervals: str = ""
    gold_scenes: str = ""
    face_test: str = ""
    out_dir: str = "out"
    event_start: int | None = None
    video_start: int | None = None  # epoch second of subtitle time zero
    dedupe: bool = False
    k: float = 0.10
    m: float = 0.05
    margin_seconds: int = 0
    window_seconds: float = 15.0
    confidence_threshold: float = 0.5
    frames_per_character: int = 1
    seed: int = 0
    train: partial_label.TrainConfig = field(default_factory=partial_label.TrainConfig)

    @classmethod
    def from_file(cls, path: Path, overrides: dict | None = None) -> "PipelineConfig":
        if not path.exists():
            raise MissingInputError(path)
        raw = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise PipelineError(f"config {path} must be a JSON object")
        raw.update(
            {k: v for k, v in (overrides or {}).items() if k != "train" and v is not None}
        )
        train_raw = raw.pop("train", {}) or {}
        train_over = (overrides or {}).get("train") or {}
        train_raw.update({k: v for k, v in train_over.items() if v is not None})
        known = {f for f in cls.__dataclass_fields__ if f != "train"}
        unknown = set(raw) - known
        if unknown:
            raise PipelineError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        if "seed" not in train_raw:
            train_raw["seed"] = cfg.seed
        cfg.train = partial_label.TrainConfig(**train_raw)
        return cfg

    def path(self, key: str) -> Path:
        value = getattr(self, key)
        if not value:
            raise PipelineError(f"config key {key!r} is not set")
        p = Path(value)
        if not p.exists():
            raise MissingInputError(p)
        return p

    def out(self, name: str) -> Path:
        out_dir = Path(self.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        return out_dir / name


def _cached(cfg: PipelineConfig, resume: bool, *names: str) -> bool:
    return resume and all(cfg.out(n).exists() for n in names)


def stage_ingest(cfg: PipelineConfig, resume: bool = False) -> None:
    if _cached(cfg, resume, "messages.jsonl", "ingest_report.json"):
        log.info("ingest: cached, skipping")
        return
    result = corpus.parse_messages(cfg.path("messages"))
    corpus.parse_alias_table(cfg.path("aliases"))  # validated here, reloaded per stage
    messages = result.messages
    if cfg.dedupe:
        messages = corpus.dedupe_messages(messages)
    cfg.out("messages.jsonl").write_text(
        corpus.serialize_messages(messages), encoding="utf-8"
    )
    report = {
        "parsed": len(result.messages),
        "kept": len(messages),
        "malformed": [
            {"line": issue.line_no, "reason": issue.reason} for issue in result.issues
        ],
    }
    cfg.out("ingest_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_ingested(cfg: PipelineConfig) -> list[corpus.Message]:
    path = cfg.out("messages.jsonl")
    if not path.exists():
        raise MissingInputError(path)
    result = corpus.parse_messages(path)
    if result.issues:
        raise PipelineError("cached messages.jsonl is corrupt; re-run ingest")
    return result.messages


def stage_detect_scenes(
    cfg: PipelineConfig, resume: bool = False, baseline: str | None = None
) -> list[scenes.Scene]:
    out_name = f"scenes_{baseline}.jsonl" if baseline else "scenes.jsonl"
    if _cached(cfg, resume, out_name):
        log.info("detect-scenes: cached, skipping")
        return scenes.load_scenes(cfg.out(out_name))
    messages = _load_ingested(cfg)
    aliases = corpus.parse_alias_table(cfg.path("aliases"))
    bins = corpus.bin_by_minute(messages, aliases, start_t=cfg.event_start)
    if baseline is None:
        detcfg = scenes.SceneDetectorConfig(
            k=cfg.k, m=cfg.m, margin_seconds=cfg.margin_seconds
        )
        detected = scenes.detect_scenes(bins, detcfg)
    elif baseline == "volume":
        detected = scenes.baseline_volume_peaks(bins)
    elif baseline == "meanstd":
        detected = scenes.baseline_mean_std(bins, n_sigma=1.0)
    else:
        raise PipelineError(f"unknown baseline {baseline!r}")
    cfg.out(out_name).write_text(scenes.serialize_scenes(detected), encoding="utf-8")
    return detected


def stage_select_tweets(cfg: PipelineConfig, resume: bool = False) -> None:
    from .embeddings import load_store

    if _cached(cfg, resume, "scene_tweets.jsonl"):
        log.info("select-tweets: cached, skipping")
        return
    detected = scenes.load_scenes(cfg.out("scenes.jsonl"))
    messages = {m.id: m for m in _load_ingested(cfg)}
    aliases = corpus.parse_alias_table(cfg.path("aliases"))
    store = load_store(cfg.path("tweet_vectors"))
    records = []
    for i, scene in enumerate(detected):
        sel = tweet_select.select_scene_tweet(scene, messages, store, aliases)
        records.append(
            {
                "scene_index": i,
                "tweet_id": sel.message_id,
                "tier": sel.tier.value,
                "text": messages[sel.message_id].text,
            }
        )
    jsonl.write_records(cfg.out("scene_tweets.jsonl"), records)


def stage_weak_label(cfg: PipelineConfig, resume: bool = False) -> None:
    from .embeddings import load_face_records, serialize_face_records

    if _cached(cfg, resume, "labeled_faces.jsonl", "weak_label_report.json"):
        log.info("weak-label: cached, skipping")
        return
    faces = load_face_records(cfg.path("face_vectors"))
    if cfg.speaking_intervals:
        intervals = weak_labels.load_speaking_intervals(cfg.path("speaking_intervals"))
    else:
        cues = weak_labels.parse_srt(cfg.path("subtitles"))
        aliases = corpus.parse_alias_table(cfg.path("aliases"))
        lines = weak_labels.parse_transcript(cfg.path("transcript"), aliases)
        intervals = weak_labels.align(cues, lines)
    if cfg.video_start:
        # subtitle clocks start at video time zero; faces carry epoch seconds
        intervals = [
            weak_labels.SpeakingInterval(
                speaker=iv.speaker,
                start_t=iv.start_t + cfg.video_start * 1000,
                end_t=iv.end_t + cfg.video_start * 1000,
            )
            for iv in intervals
        ]
    result = weak_labels.assign_weak_labels(
        faces, intervals, window_seconds=cfg.window_seconds
    )
    cfg.out("labeled_faces.jsonl").write_text(
        serialize_face_records(result.faces), encoding="utf-8"
    )
    report = {
        "labeled": len(result.faces),
        "dropped_crowded": sorted(result.dropped_crowded),
        "dropped_unlabeled": sorted(result.dropped_unlabeled),
        "speaking_intervals": len(intervals),
    }
    cfg.out("weak_label_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _labeled_examples(path: Path) -> list[partial_label.PartialExample]:
    from .embeddings import load_face_records

    if not path.exists():
        raise MissingInputError(path)
    return [
        partial_label.PartialExample(
            x=face.embedded.vector, candidates=face.weak_labels, episode=face.episode
        )
        for face in load_face_records(path)
    ]


def stage_train_faces(cfg: PipelineConfig, resume: bool = False) -> None:
    if _cached(cfg, resume, "model.ckpt", "train_metrics.jsonl"):
        log.info("train-faces: cached, skipping")
        return
    examples = _labeled_examples(cfg.out("labeled_faces.jsonl"))
    if not examples:
        raise PipelineError("no labeled faces to train on; check weak-label stage")
    metrics: list[dict] = []
    model = partial_label.train(examples, cfg.train, metrics=metrics)
    partial_label.save_model(model, cfg.out("model.ckpt"), config=cfg.train)
    jsonl.write_records(cfg.out("train_metrics.jsonl"), metrics)


def stage_select_frames(cfg: PipelineConfig, resume: bool = False) -> None:
    from .embeddings import load_face_records, load_store

    if _cached(cfg, resume, "frame_choices.jsonl"):
        log.info("select-frames: cached, skipping")
        return
    detected = scenes.load_scenes(cfg.out("scenes.jsonl"))
    tweets = list(jsonl.iter_records(cfg.out("scene_tweets.jsonl")))
    aliases = corpus.parse_alias_table(cfg.path("aliases"))
    frame_store = load_store(cfg.path("frame_vectors"))
    faces = load_face_records(cfg.out("labeled_faces.jsonl"))
    model = partial_label.load_model(cfg.out("model.ckpt"))

    records = []
    for (_, tweet_rec), scene in zip(tweets, detected):
        characters = aliases.mentions(tweet_rec["text"])
        choices, omissions = frame_select.select_frames(
            scene,
            characters,
            frame_store,
            faces,
            model,
            confidence_threshold=cfg.confidence_threshold,
            frames_per_character=cfg.frames_per_character,
        )
        records.append(
            {
                "scene_index": tweet_rec["scene_index"],
                "frames": [
                    {
                        "frame_id": fc.frame_id,
                        "who": fc.who,
                        "confidence": fc.confidence,
                        "t": fc.t,
                    }
                    for fc in choices
                ],
                "omissions": omissions,
            }
        )
    jsonl.write_records(cfg.out("frame_choices.jsonl"), records)


def stage_summarize(cfg: PipelineConfig, resume: bool = False) -> None:
    if _cached(cfg, resume, "summary.jsonl", "report.md"):
        log.info("summarize: cached, skipping")
        return
    detected = scenes.load_scenes(cfg.out("scenes.jsonl"))
    tweet_recs = [r for _, r in jsonl.iter_records(cfg.out("scene_tweets.jsonl"))]
    frame_recs = [r for _, r in jsonl.iter_records(cfg.out("frame_choices.jsonl"))]
    tweets = [
        (r["tweet_id"], r["text"], tweet_select.SelectionTier(r["tier"]))
        for r in tweet_recs
    ]
    frames = [
        (
            [
                frame_select.FrameChoice(
                    frame_id=f["frame_id"],
                    who=f["who"],
                    confidence=f["confidence"],
                    t=f["t"],
                )
                for f in r["frames"]
            ],
            list(r["omissions"]),
        )
        for r in frame_recs
    ]
    entries = frame_select.assemble_summary(detected, tweets, frames)
    cfg.out("summary.jsonl").write_text(
        frame_select.serialize_summary(entries), encoding="utf-8"
    )
    cfg.out("report.md").write_text(
        frame_select.render_report(entries), encoding="utf-8"
    )


def stage_eval_scenes(
    cfg: PipelineConfig, baseline: str | None = None
) -> scenes.SceneEvalReport:
    name = f"scenes_{baseline}.jsonl" if baseline else "scenes.jsonl"
    predicted = scenes.load_scenes(cfg.out(name))
    gold = scenes.load_gold_scenes(cfg.path("gold_scenes"))
    report = scenes.evaluate_scenes(predicted, gold, cfg.margin_seconds)
    out_name = f"scene_eval_{baseline}.json" if baseline else "scene_eval.json"
    cfg.out(out_name).write_text(
        json.dumps(
            {
                "precision": report.precision,
                "recall": report.recall,
                "f1": report.f1,
                "matched": [list(pair) for pair in report.matched],
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return report


def stage_eval_faces(cfg: PipelineConfig) -> partial_label.AccuracyReport:
    model = partial_label.load_model(cfg.out("model.ckpt"))
    test = _labeled_examples(cfg.path("face_test"))
    report = partial_label.evaluate_accuracy(model, test)
    cfg.out("face_eval.json").write_text(
        json.dumps(
            {
                "micro_accuracy": report.micro_accuracy,
                "per_label": report.per_label,
                "pearson_r": report.pearson_r,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return report


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "detect-scenes": stage_detect_scenes,
    "select-tweets": stage_select_tweets,
    "weak-label": stage_weak_label,
    "train-faces": stage_train_faces,
    "select-frames": stage_select_frames,
    "summarize": stage_summarize,
}


def run_pipeline(
    cfg: PipelineConfig, resume: bool = False, only_stage: str | None = None
) -> None:
    """Run the stages in order, stopping after ``only_stage`` when given.

    A truncated run still executes the prerequisite stages, so e.g. stopping
    at detect-scenes yields a scene file and no summary.
    """
    if only_stage is not None and only_stage not in _STAGE_FUNCS:
        raise PipelineError(f"unknown stage {only_stage!r}; choose from {STAGES}")
    todo = STAGES[: STAGES.index(only_stage) + 1] if only_stage else STAGES
    for name in todo:
        log.info("running stage %s", name)
        _STAGE_FUNCS[name](cfg, resume=resume)
