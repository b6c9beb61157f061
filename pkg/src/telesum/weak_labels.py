"""Weak face labels from subtitles (what/when) aligned with transcripts (who/what).

Subtitles carry timing but no speaker; transcripts carry speakers but no
timing. A monotone alignment between the two recovers who speaks when, and
every face within a configurable window of a speaking interval inherits that
speaker as a candidate label.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from . import jsonl
from .corpus import AliasTable, _tokens
from .embeddings import FaceRecord

log = logging.getLogger(__name__)

_TIMECODE_RE = re.compile(
    r"^(\d{2}):(\d{2}):(\d{2}),(\d{3})\s*-->\s*(\d{2}):(\d{2}):(\d{2}),(\d{3})$"
)
_TAG_RE = re.compile(r"<[^>]*>")

# faces from frames crowded beyond this are too ambiguous to weak-label
MAX_FACES_PER_FRAME = 5


class SrtError(ValueError):
    """Raised for malformed SubRip input."""


@dataclass(frozen=True)
class SubtitleCue:
    index: int
    start_t: int  # milliseconds from video start
    end_t: int
    text: str


@dataclass(frozen=True)
class TranscriptLine:
    speaker: str
    text: str


@dataclass(frozen=True)
class SpeakingInterval:
    speaker: str
    start_t: int  # milliseconds
    end_t: int


@dataclass
class WeakLabelResult:
    faces: list[FaceRecord]
    dropped_crowded: list[str]
    dropped_unlabeled: list[str]


def _parse_timecode_pair(line: str, cue_index: int) -> tuple[int, int]:
    match = _TIMECODE_RE.match(line.strip())
    if not match:
        raise SrtError(f"cue {cue_index}: malformed timecode line {line!r}")
    h1, m1, s1, ms1, h2, m2, s2, ms2 = (int(g) for g in match.groups())
    start = ((h1 * 60 + m1) * 60 + s1) * 1000 + ms1
    end = ((h2 * 60 + m2) * 60 + s2) * 1000 + ms2
    if start >= end:
        raise SrtError(f"cue {cue_index}: start {start}ms is not before end {end}ms")
    return start, end


def parse_srt(source: bytes | str | Path) -> list[SubtitleCue]:
    """Parse SubRip text into time-ordered cues.

    Formatting tags are stripped from cue text. Cues that overlap in time are
    merged into one (reported via logging) so the result is non-overlapping.
    """
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8-sig")
    elif isinstance(source, bytes):
        text = source.decode("utf-8-sig")
    else:
        text = source
    text = text.replace("\r\n", "\n").replace("\r", "\n")

    cues: list[SubtitleCue] = []
    block: list[str] = []
    for raw in text.split("\n") + [""]:
        line = raw.rstrip()
        if line:
            block.append(line)
            continue
        if not block:
            continue
        if len(block) < 2:
            raise SrtError(f"incomplete cue block near {block[0]!r}")
        try:
            index = int(block[0])
        except ValueError:
            raise SrtError(f"cue index line is not an integer: {block[0]!r}") from None
        start, end = _parse_timecode_pair(block[1], index)
        cue_text = _TAG_RE.sub("", "\n".join(block[2:])).strip()
        cues.append(SubtitleCue(index=index, start_t=start, end_t=end, text=cue_text))
        block = []

    cues.sort(key=lambda c: (c.start_t, c.end_t, c.index))
    merged: list[SubtitleCue] = []
    merge_count = 0
    for cue in cues:
        if merged and cue.start_t < merged[-1].end_t:
            prev = merged[-1]
            merged[-1] = SubtitleCue(
                index=prev.index,
                start_t=prev.start_t,
                end_t=max(prev.end_t, cue.end_t),
                text=(prev.text + "\n" + cue.text).strip(),
            )
            merge_count += 1
        else:
            merged.append(cue)
    if merge_count:
        log.warning("merged %d overlapping subtitle cues", merge_count)
    return merged


def format_timecode(ms: int) -> str:
    seconds, msec = divmod(ms, 1000)
    minutes, sec = divmod(seconds, 60)
    hours, minute = divmod(minutes, 60)
    return f"{hours:02d}:{minute:02d}:{sec:02d},{msec:03d}"


def serialize_srt(cues: list[SubtitleCue]) -> str:
    blocks = [
        f"{c.index}\n{format_timecode(c.start_t)} --> {format_timecode(c.end_t)}\n{c.text}\n"
        for c in cues
    ]
    return "\n".join(blocks)


def parse_transcript(
    source: bytes | str | Path, aliases: AliasTable | None = None
) -> list[TranscriptLine]:
    """Load transcript records {speaker, text}, optionally validating speakers
    against the alias table's canonical names."""
    lines = []
    for line_no, record in jsonl.iter_records(source):
        speaker = record.get("speaker")
        text = record.get("text")
        if not isinstance(speaker, str) or not speaker.strip():
            raise ValueError(f"line {line_no}: transcript record needs a speaker")
        if not isinstance(text, str) or not text.strip():
            raise ValueError(f"line {line_no}: transcript record needs text")
        if aliases is not None and speaker not in aliases.entries:
            raise ValueError(f"line {line_no}: unknown speaker {speaker!r}")
        lines.append(TranscriptLine(speaker=speaker, text=text))
    return lines


def load_speaking_intervals(source: bytes | str | Path) -> list[SpeakingInterval]:
    """Load externally supplied {speaker, start_ms, end_ms} records (used for
    episodes without transcripts)."""
    intervals = []
    for line_no, record in jsonl.iter_records(source):
        try:
            interval = SpeakingInterval(
                speaker=str(record["speaker"]),
                start_t=int(record["start_ms"]),
                end_t=int(record["end_ms"]),
            )
        except (KeyError, TypeError, ValueError):
            raise ValueError(f"line {line_no}: need speaker, start_ms, end_ms")
        if interval.start_t >= interval.end_t:
            raise ValueError(f"line {line_no}: empty speaking interval")
        intervals.append(interval)
    return sorted(intervals, key=lambda iv: (iv.start_t, iv.end_t, iv.speaker))


def token_f1(a: str, b: str) -> float:
    """Multiset token overlap F1 between two texts, 0 when either is empty."""
    ta, tb = _tokens(a), _tokens(b)
    if not ta or not tb:
        return 0.0
    overlap = sum((Counter(ta) & Counter(tb)).values())
    return 2.0 * overlap / (len(ta) + len(tb))


def align(
    cues: list[SubtitleCue],
    lines: list[TranscriptLine],
    min_score: float = 0.5,
) -> list[SpeakingInterval]:
    """Monotone alignment of cues to transcript lines by token-overlap F1.

    Dynamic programming maximizes the summed pair score; skipping a cue or a
    line costs nothing, and pairs scoring below ``min_score`` may not match.
    Each aligned cue emits one SpeakingInterval carrying the matched line's
    speaker and the cue's own times.
    """
    n, k = len(cues), len(lines)
    if n == 0 or k == 0:
        return []
    scores = [[token_f1(c.text, l.text) for l in lines] for c in cues]

    dp = [[0.0] * (k + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        for j in range(1, k + 1):
            best = max(dp[i - 1][j], dp[i][j - 1])
            s = scores[i - 1][j - 1]
            if s >= min_score:
                best = max(best, dp[i - 1][j - 1] + s)
            dp[i][j] = best

    # backtrack, preferring match > skip-line > skip-cue on ties
    intervals: list[SpeakingInterval] = []
    i, j = n, k
    while i > 0 and j > 0:
        s = scores[i - 1][j - 1]
        if s >= min_score and dp[i][j] == dp[i - 1][j - 1] + s:
            intervals.append(
                SpeakingInterval(
                    speaker=lines[j - 1].speaker,
                    start_t=cues[i - 1].start_t,
                    end_t=cues[i - 1].end_t,
                )
            )
            i, j = i - 1, j - 1
        elif dp[i][j] == dp[i][j - 1]:
            j -= 1
        else:
            i -= 1
    intervals.reverse()
    return intervals


def assign_weak_labels(
    faces: list[FaceRecord],
    intervals: list[SpeakingInterval],
    window_seconds: float = 15.0,
) -> WeakLabelResult:
    """Label each face with every speaker active within the window of its frame.

    A speaker qualifies when their interval intersects
    [face.t - window, face.t + window]. Faces from frames holding more than
    MAX_FACES_PER_FRAME faces are dropped, as are faces that end up with no
    labels; both groups are reported in the result.
    """
    per_frame = Counter(f.frame_id for f in faces)
    result = WeakLabelResult(faces=[], dropped_crowded=[], dropped_unlabeled=[])
    for face in faces:
        if per_frame[face.frame_id] > MAX_FACES_PER_FRAME:
            result.dropped_crowded.append(face.id)
            continue
        lo = (face.t - window_seconds) * 1000.0
        hi = (face.t + window_seconds) * 1000.0
        labels = frozenset(
            iv.speaker for iv in intervals if iv.start_t <= hi and iv.end_t >= lo
        )
        if not labels:
            result.dropped_unlabeled.append(face.id)
            continue
        result.faces.append(
            FaceRecord(
                embedded=face.embedded,
                frame_id=face.frame_id,
                weak_labels=labels,
                episode=face.episode,
            )
        )
    return result
