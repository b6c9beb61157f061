"""Select video frames showing each mentioned character and assemble summaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jsonl
from .embeddings import EmbeddingStore, FaceRecord, cosine
from .partial_label import SoftmaxModel
from .scenes import Scene
from .tweet_select import SelectionTier

ALL_CHARACTERS = "ALL"


@dataclass(frozen=True)
class FrameChoice:
    frame_id: str
    who: str  # a character name, or ALL_CHARACTERS
    confidence: float
    t: int


@dataclass
class SummaryEntry:
    """One scene of the multimedia summary: interval, tweet, frames."""

    scene: Scene
    tweet_id: str | None
    tweet_text: str = ""
    fallback_tier: SelectionTier | None = None
    frames: list[FrameChoice] = field(default_factory=list)
    omissions: list[str] = field(default_factory=list)

    @property
    def tweet_only(self) -> bool:
        return not self.frames


def _face_confidences(
    faces: list[FaceRecord], model: SoftmaxModel, characters: list[str]
) -> dict[str, dict[str, float]]:
    """frame_id -> character -> highest face probability in that frame."""
    idx = {c: model.label_space.index(c) for c in characters}
    conf: dict[str, dict[str, float]] = {}
    for face in faces:
        probs = model.predict(face.embedded.vector)
        bucket = conf.setdefault(face.frame_id, {})
        for c, i in idx.items():
            p = float(probs[i])
            if p > bucket.get(c, 0.0):
                bucket[c] = p
    return conf


def _rank_candidates(
    candidates: list[tuple[object, float]],
) -> list[tuple[object, float]]:
    """Order by cosine-to-centroid desc, confidence desc, time asc, id asc."""
    from .embeddings import _safe_cosine

    vecs = np.stack([item.vector for item, _ in candidates])
    center = vecs.mean(axis=0)
    sims = [_safe_cosine(item.vector, center) for item, _ in candidates]
    order = sorted(
        range(len(candidates)),
        key=lambda i: (-sims[i], -candidates[i][1], candidates[i][0].t, candidates[i][0].id),
    )
    return [candidates[i] for i in order]


def select_frames(
    scene: Scene,
    tweet_characters: set[str],
    frame_store: EmbeddingStore,
    face_records: list[FaceRecord],
    model: SoftmaxModel,
    confidence_threshold: float = 0.5,
    frames_per_character: int = 1,
) -> tuple[list[FrameChoice], list[str]]:
    """Frames from the scene window showing each character the tweet mentions.

    Per character, candidate frames contain a face whose model probability
    for that character exceeds the threshold; the pick maximizes cosine to
    the centroid of the candidates' frame vectors, breaking ties by higher
    confidence then earlier timestamp. One extra frame containing every
    mentioned character is chosen the same way when two or more characters
    are mentioned. Returns the timestamp-ordered choices plus a note per
    character that had no qualifying frame.
    """
    window_frames = frame_store.in_window(scene.start_t, scene.end_t, kind="frame")
    omissions: list[str] = []
    if not window_frames:
        return [], ["no frames in scene window"]

    window_ids = {f.id for f in window_frames}
    window_faces = [f for f in face_records if f.frame_id in window_ids]
    characters = sorted(tweet_characters)
    if not characters:
        return [], ["selected tweet mentions no known characters"]
    known = [c for c in characters if c in model.label_space.labels]
    for c in characters:
        if c not in model.label_space.labels:
            omissions.append(f"{c}: not in face-model label space")
    conf = _face_confidences(window_faces, model, known)
    frames_by_id = {f.id: f for f in window_frames}

    chosen: list[FrameChoice] = []
    for c in known:
        candidates = [
            (frames_by_id[fid], by_char[c])
            for fid, by_char in conf.items()
            if by_char.get(c, 0.0) > confidence_threshold
        ]
        if not candidates:
            omissions.append(f"{c}: no frame above confidence {confidence_threshold}")
            continue
        for item, confidence in _rank_candidates(candidates)[:frames_per_character]:
            chosen.append(
                FrameChoice(frame_id=item.id, who=c, confidence=confidence, t=item.t)
            )

    if len(known) >= 2:
        joint = [
            (frames_by_id[fid], min(by_char.get(c, 0.0) for c in known))
            for fid, by_char in conf.items()
            if all(by_char.get(c, 0.0) > confidence_threshold for c in known)
        ]
        if joint:
            item, confidence = _rank_candidates(joint)[0]
            chosen.append(
                FrameChoice(
                    frame_id=item.id, who=ALL_CHARACTERS, confidence=confidence, t=item.t
                )
            )
        else:
            omissions.append("ALL: no frame shows every mentioned character")

    chosen.sort(key=lambda fc: (fc.t, fc.frame_id, fc.who))
    return chosen, omissions


def assemble_summary(
    scenes: list[Scene],
    tweets: list[tuple[str | None, str, SelectionTier | None]],
    frames: list[tuple[list[FrameChoice], list[str]]],
) -> list[SummaryEntry]:
    """Combine per-scene selections (index-aligned) into chronological entries."""
    if not (len(scenes) == len(tweets) == len(frames)):
        raise ValueError("scenes, tweets, and frames must be index-aligned")
    entries = []
    for scene, (tweet_id, tweet_text, tier), (choices, omissions) in zip(
        scenes, tweets, frames
    ):
        entries.append(
            SummaryEntry(
                scene=scene,
                tweet_id=tweet_id,
                tweet_text=tweet_text,
                fallback_tier=tier,
                frames=list(choices),
                omissions=list(omissions),
            )
        )
    entries.sort(key=lambda e: e.scene.start_t)
    return entries


def serialize_summary(entries: list[SummaryEntry]) -> str:
    return jsonl.dump_records(
        {
            "start_t": e.scene.start_t,
            "end_t": e.scene.end_t,
            "trigger_characters": sorted(e.scene.trigger_characters),
            "tweet_id": e.tweet_id,
            "tweet_text": e.tweet_text,
            "fallback_tier": e.fallback_tier.value if e.fallback_tier else None,
            "tweet_only": e.tweet_only,
            "frames": [
                {"frame_id": fc.frame_id, "who": fc.who, "confidence": fc.confidence}
                for fc in e.frames
            ],
            "omissions": list(e.omissions),
        }
        for e in entries
    )


def render_report(
    entries: list[SummaryEntry], frame_paths: dict[str, str] | None = None
) -> str:
    """Human-readable markdown rendering of the multimedia summary."""
    lines = ["# Event summary", ""]
    for n, e in enumerate(entries, 1):
        chars = ", ".join(sorted(e.scene.trigger_characters)) or "(volume spike)"
        lines.append(f"## Scene {n}: {chars}")
        lines.append(f"*Interval:* {e.scene.start_t} - {e.scene.end_t}")
        lines.append("")
        lines.append(f"> {e.tweet_text}" if e.tweet_text else "> (no tweet selected)")
        lines.append("")
        if e.tweet_only:
            lines.append("_No frames selected for this scene._")
        for fc in e.frames:
            path = (frame_paths or {}).get(fc.frame_id, fc.frame_id)
            lines.append(f"- ![{fc.who}]({path}) {fc.who} (confidence {fc.confidence:.2f})")
        lines.append("")
    return "\n".join(lines)
