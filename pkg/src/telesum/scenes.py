"""Scene boundary detection from per-minute mention fractions, plus baselines and scoring.

A new scene starts at the minute where some character's mention fraction
spikes above ``k`` while that character accounted for less than ``m`` of the
messages in the scene currently open. Volume-only baselines (local peaks and
mean/std thresholding) are provided for comparison, along with interval-based
precision/recall/F1 scoring of predicted scene starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import jsonl
from .corpus import MinuteBin


@dataclass(frozen=True)
class SceneDetectorConfig:
    k: float = 0.10
    m: float = 0.05
    margin_seconds: int = 0

    def __post_init__(self):
        if not 0 < self.k <= 1:
            raise ValueError(f"k must be in (0, 1], got {self.k}")
        if not 0 <= self.m < 1:
            raise ValueError(f"m must be in [0, 1), got {self.m}")
        if self.m >= self.k:
            raise ValueError(f"m must be below k, got m={self.m}, k={self.k}")
        if self.margin_seconds < 0:
            raise ValueError("margin_seconds must be non-negative")


@dataclass(frozen=True)
class Scene:
    """A detected interval [start_t, end_t) with its triggering characters."""

    start_t: int
    end_t: int
    trigger_characters: frozenset[str]
    message_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if self.start_t >= self.end_t:
            raise ValueError("scene must have start_t < end_t")


@dataclass(frozen=True)
class SceneEvalReport:
    precision: float
    recall: float
    f1: float
    matched: tuple[tuple[int, int], ...] = field(default=())


def _mention_count(bin_: MinuteBin, name: str) -> int:
    # fractions were computed as count/len(messages), so this recovers the count
    return round(bin_.mention_fraction.get(name, 0.0) * bin_.count())


def detect_scenes(bins: list[MinuteBin], cfg: SceneDetectorConfig) -> list[Scene]:
    """Scan minute bins in order and cut scenes at qualifying mention spikes.

    A character qualifies at a bin when its fraction there exceeds ``cfg.k``
    and the fraction of all messages in the currently-open scene that mention
    it is below ``cfg.m`` (vacuously true before the first scene). All
    characters qualifying at the same bin trigger one scene together. Scenes
    partition the stream from the first trigger to the end of the last bin.
    """
    if not bins:
        return []

    starts: list[tuple[int, frozenset[str]]] = []
    open_messages = 0
    open_mentions: dict[str, int] = {}
    is_open = False

    for i, b in enumerate(bins):
        qualifying = set()
        for name, frac in b.mention_fraction.items():
            if frac <= cfg.k:
                continue
            if not is_open:
                qualifying.add(name)
            else:
                scene_frac = open_mentions.get(name, 0) / open_messages if open_messages else 0.0
                if scene_frac < cfg.m:
                    qualifying.add(name)
        if qualifying:
            starts.append((i, frozenset(qualifying)))
            is_open = True
            open_messages = 0
            open_mentions = {}
        if is_open:
            open_messages += b.count()
            for name in b.mention_fraction:
                open_mentions[name] = open_mentions.get(name, 0) + _mention_count(b, name)

    stream_end = bins[-1].start_t + 60
    scenes = []
    for idx, (bin_index, triggers) in enumerate(starts):
        next_index = starts[idx + 1][0] if idx + 1 < len(starts) else len(bins)
        end_t = bins[next_index].start_t if next_index < len(bins) else stream_end
        message_ids = tuple(
            mid for b in bins[bin_index:next_index] for mid in b.message_ids
        )
        scenes.append(
            Scene(
                start_t=bins[bin_index].start_t,
                end_t=end_t,
                trigger_characters=triggers,
                message_ids=message_ids,
            )
        )
    return scenes


def _scene_from_bin_range(bins: list[MinuteBin], first: int, last: int) -> Scene:
    return Scene(
        start_t=bins[first].start_t,
        end_t=bins[last].start_t + 60,
        trigger_characters=frozenset(),
        message_ids=tuple(mid for b in bins[first : last + 1] for mid in b.message_ids),
    )


def baseline_volume_peaks(bins: list[MinuteBin]) -> list[Scene]:
    """Volume baseline: one scene per local peak in per-minute message counts.

    A peak needs strictly smaller neighbors on both sides; a scene runs from
    the start of the strictly increasing ascent to the end of the strictly
    decreasing descent. When two peaks share a valley minute the later scene's
    start is clipped so baseline output stays non-overlapping.
    """
    counts = [b.count() for b in bins]
    scenes: list[Scene] = []
    prev_last = -1
    for i in range(1, len(counts) - 1):
        if not (counts[i - 1] < counts[i] > counts[i + 1]):
            continue
        first = i
        while first > 0 and counts[first - 1] < counts[first]:
            first -= 1
        last = i
        while last + 1 < len(counts) and counts[last + 1] < counts[last]:
            last += 1
        first = max(first, prev_last + 1)
        if first > last:
            continue
        scenes.append(_scene_from_bin_range(bins, first, last))
        prev_last = last
    return scenes


def baseline_mean_std(bins: list[MinuteBin], n_sigma: float) -> list[Scene]:
    """Threshold baseline: scenes are maximal runs of minutes whose message
    count strictly exceeds mean + n_sigma * std (population std over all bins)."""
    if not bins:
        return []
    counts = [b.count() for b in bins]
    n = len(counts)
    mean = sum(counts) / n
    var = sum((c - mean) ** 2 for c in counts) / n
    threshold = mean + n_sigma * var**0.5

    scenes: list[Scene] = []
    run_start: int | None = None
    for i, c in enumerate(counts):
        if c > threshold:
            if run_start is None:
                run_start = i
        elif run_start is not None:
            scenes.append(_scene_from_bin_range(bins, run_start, i - 1))
            run_start = None
    if run_start is not None:
        scenes.append(_scene_from_bin_range(bins, run_start, len(bins) - 1))
    return scenes


def f1_score(precision: float, recall: float) -> float:
    if precision + recall <= 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def evaluate_scenes(
    predicted: list[Scene],
    gold: list[tuple[int, int]],
    margin_seconds: int = 0,
) -> SceneEvalReport:
    """Score predicted scene starts against gold intervals.

    A prediction matches a gold interval when its start falls inside
    [gold_start - margin, gold_end + margin]; matching is greedy in time
    order and one-to-one. With both sides empty, P = R = F1 = 1 by
    convention; an empty side against a non-empty one scores 0.
    """
    order = sorted(range(len(predicted)), key=lambda i: predicted[i].start_t)
    gold_taken = [False] * len(gold)
    matched: list[tuple[int, int]] = []
    for pred_idx in order:
        start = predicted[pred_idx].start_t
        for g_idx, (g_start, g_end) in enumerate(gold):
            if gold_taken[g_idx]:
                continue
            if g_start - margin_seconds <= start <= g_end + margin_seconds:
                gold_taken[g_idx] = True
                matched.append((pred_idx, g_idx))
                break

    if not predicted and not gold:
        return SceneEvalReport(precision=1.0, recall=1.0, f1=1.0)
    precision = len(matched) / len(predicted) if predicted else 0.0
    recall = len(matched) / len(gold) if gold else 0.0
    return SceneEvalReport(
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        matched=tuple(sorted(matched)),
    )


def load_gold_scenes(source: bytes | str | Path) -> list[tuple[int, int]]:
    """Load gold-scene line records {start_t, end_t, description?}."""
    intervals = []
    for line_no, record in jsonl.iter_records(source):
        try:
            start, end = int(record["start_t"]), int(record["end_t"])
        except (KeyError, TypeError, ValueError):
            raise ValueError(f"line {line_no}: gold scene needs integer start_t and end_t")
        if start >= end:
            raise ValueError(f"line {line_no}: gold scene must have start_t < end_t")
        intervals.append((start, end))
    intervals.sort()
    return intervals


def serialize_scenes(scenes: list[Scene]) -> str:
    return jsonl.dump_records(
        {
            "start_t": s.start_t,
            "end_t": s.end_t,
            "trigger_characters": sorted(s.trigger_characters),
            "message_ids": list(s.message_ids),
        }
        for s in scenes
    )


def load_scenes(source: bytes | str | Path) -> list[Scene]:
    scenes = []
    for _, record in jsonl.iter_records(source):
        scenes.append(
            Scene(
                start_t=int(record["start_t"]),
                end_t=int(record["end_t"]),
                trigger_characters=frozenset(record.get("trigger_characters", [])),
                message_ids=tuple(record.get("message_ids", [])),
            )
        )
    return scenes
