"""Message-stream ingestion: parsing, alias tables, mention tagging, minute binning."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from . import jsonl

# @handles are removed before tokenization so a user name never counts as a
# character mention (the documented false-positive mode of alias matching).
_HANDLE_RE = re.compile(r"@\w+")

# Tokens are runs of alphanumerics; apostrophes join a token when flanked by
# alphanumerics on both sides ("O'Rourke" is one token, "'round" is not).
_TOKEN_RE = re.compile(r"[^\W_]+(?:['’][^\W_]+)*")

_RT_PREFIX_RE = re.compile(r"^\s*rt\s+@\w+:?\s*", re.IGNORECASE)


class CorpusError(ValueError):
    """Raised for unrecoverable corpus-level problems (e.g. alias collisions)."""


class AliasCollisionError(CorpusError):
    """The same alias maps to two canonical names."""


@dataclass(frozen=True)
class Message:
    """One timestamped social-media post."""

    id: str
    t: int
    author: str
    text: str


@dataclass(frozen=True)
class ParseIssue:
    line_no: int
    reason: str


@dataclass
class ParseResult:
    messages: list[Message]
    issues: list[ParseIssue]


@dataclass(frozen=True)
class MinuteBin:
    """Messages grouped into one minute of the stream.

    ``mention_fraction`` maps canonical names with at least one mention to the
    share of the bin's messages mentioning them; absent names have fraction 0.
    """

    minute_index: int
    start_t: int
    message_ids: tuple[str, ...]
    mention_fraction: dict[str, float] = field(default_factory=dict)

    def count(self) -> int:
        return len(self.message_ids)


def _tokens(text: str) -> list[str]:
    return [t.casefold().replace("’", "'") for t in _TOKEN_RE.findall(text)]


class AliasTable:
    """Canonical character names and the aliases used to mention them.

    Alias matching is whole-token and case-insensitive; multi-word aliases
    match as consecutive token runs. The same alias may serve one canonical
    name only.
    """

    def __init__(self, entries: dict[str, set[str]]):
        self.entries: dict[str, frozenset[str]] = {}
        # first token of the alias -> list of (full token tuple, canonical name)
        self._index: dict[str, list[tuple[tuple[str, ...], str]]] = {}
        claimed: dict[tuple[str, ...], str] = {}
        for name, aliases in entries.items():
            if not aliases:
                raise CorpusError(f"canonical name {name!r} has no aliases")
            kept = set()
            for alias in aliases:
                toks = tuple(_tokens(alias))
                if not toks:
                    raise CorpusError(f"alias {alias!r} for {name!r} is empty")
                owner = claimed.get(toks)
                if owner is not None and owner != name:
                    raise AliasCollisionError(
                        f"alias {alias!r} maps to both {owner!r} and {name!r}"
                    )
                claimed[toks] = name
                self._index.setdefault(toks[0], []).append((toks, name))
                kept.add(alias)
            self.entries[name] = frozenset(kept)

    @property
    def names(self) -> list[str]:
        return sorted(self.entries)

    def mentions(self, text: str) -> set[str]:
        """Canonical names whose alias occurs as a whole-token run in ``text``."""
        toks = _tokens(_HANDLE_RE.sub(" ", text))
        found: set[str] = set()
        for i, tok in enumerate(toks):
            for alias_toks, name in self._index.get(tok, ()):
                if tuple(toks[i : i + len(alias_toks)]) == alias_toks:
                    found.add(name)
        return found


def parse_messages(stream: bytes | str | Path) -> ParseResult:
    """Parse the message line format into time-ordered Messages.

    Malformed lines (bad JSON, missing/invalid fields, duplicate ids) are
    reported in ``issues`` rather than aborting the parse. Sorting by ``t``
    is stable, so equal-timestamp messages keep file order.
    """
    messages: list[Message] = []
    issues: list[ParseIssue] = []
    seen_ids: set[str] = set()

    if isinstance(stream, Path):
        text = stream.read_text(encoding="utf-8")
    elif isinstance(stream, bytes):
        text = stream.decode("utf-8")
    else:
        text = stream

    import json

    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as err:
            issues.append(ParseIssue(line_no, f"invalid JSON: {err.msg}"))
            continue
        if not isinstance(record, dict):
            issues.append(ParseIssue(line_no, "record is not an object"))
            continue

        msg_id = record.get("id")
        if not isinstance(msg_id, str) or not msg_id:
            issues.append(ParseIssue(line_no, "missing or empty 'id'"))
            continue
        if msg_id in seen_ids:
            issues.append(ParseIssue(line_no, f"duplicate id {msg_id!r}"))
            continue

        t = _coerce_timestamp(record.get("t"))
        if t is None:
            issues.append(ParseIssue(line_no, f"unparseable timestamp in id {msg_id!r}"))
            continue
        if t < 0:
            issues.append(ParseIssue(line_no, f"negative timestamp in id {msg_id!r}"))
            continue

        text_field = record.get("text")
        if not isinstance(text_field, str) or not text_field.strip():
            issues.append(ParseIssue(line_no, f"missing or blank 'text' in id {msg_id!r}"))
            continue

        author = record.get("author")
        if not isinstance(author, str):
            author = ""

        seen_ids.add(msg_id)
        messages.append(Message(id=msg_id, t=t, author=author, text=text_field))

    messages.sort(key=lambda m: m.t)
    return ParseResult(messages=messages, issues=issues)


def _coerce_timestamp(value) -> int | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        try:
            return int(value, 10)
        except ValueError:
            return None
    return None


def serialize_messages(messages: list[Message]) -> str:
    return jsonl.dump_records(
        {"id": m.id, "t": m.t, "author": m.author, "text": m.text} for m in messages
    )


def parse_alias_table(source: bytes | str | Path) -> AliasTable:
    """Parse alias-file records ``{name, aliases}`` into an AliasTable.

    Repeated canonical names merge their alias sets; an alias claimed by two
    different canonical names raises AliasCollisionError naming both.
    """
    entries: dict[str, set[str]] = {}
    for line_no, record in jsonl.iter_records(source):
        name = record.get("name")
        aliases = record.get("aliases")
        if not isinstance(name, str) or not name.strip():
            raise CorpusError(f"line {line_no}: missing canonical 'name'")
        if not isinstance(aliases, list) or not aliases:
            raise CorpusError(f"line {line_no}: 'aliases' must be a non-empty array")
        for alias in aliases:
            if not isinstance(alias, str) or not alias.strip():
                raise CorpusError(f"line {line_no}: blank alias for {name!r}")
        entries.setdefault(name, set()).update(aliases)
    return AliasTable(entries)


def tag_mentions(message: Message, aliases: AliasTable) -> set[str]:
    """Canonical names mentioned in the message text.

    @-handle tokens and the author field never match, so a user name that
    happens to contain a character alias is not counted.
    """
    return aliases.mentions(message.text)


def dedupe_messages(messages: list[Message]) -> list[Message]:
    """Drop repeat posts (retweets) keyed by normalized text, keeping the first."""
    seen: set[str] = set()
    kept = []
    for m in messages:
        key = " ".join(_RT_PREFIX_RE.sub("", m.text).split()).casefold()
        if key in seen:
            continue
        seen.add(key)
        kept.append(m)
    return kept


def bin_by_minute(
    messages: list[Message],
    aliases: AliasTable,
    *,
    start_t: int | None = None,
    dedupe: bool = False,
) -> list[MinuteBin]:
    """Group time-ordered messages into consecutive one-minute bins.

    The bin origin is the first message's timestamp unless ``start_t`` gives
    an explicit event start. Gaps produce empty bins so minute indices stay
    consecutive. Each bin's mention fractions are computed over its own
    message count.
    """
    if dedupe:
        messages = dedupe_messages(messages)
    if not messages:
        return []
    origin = messages[0].t if start_t is None else start_t
    if any(m.t < origin for m in messages):
        raise CorpusError("message timestamp precedes the configured event start")

    last_index = (messages[-1].t - origin) // 60
    grouped: dict[int, list[Message]] = {}
    for m in messages:
        grouped.setdefault((m.t - origin) // 60, []).append(m)

    bins: list[MinuteBin] = []
    for index in range(last_index + 1):
        members = grouped.get(index, [])
        counts: dict[str, int] = {}
        for m in members:
            for name in aliases.mentions(m.text):
                counts[name] = counts.get(name, 0) + 1
        fractions = {name: c / len(members) for name, c in counts.items()} if members else {}
        bins.append(
            MinuteBin(
                minute_index=index,
                start_t=origin + 60 * index,
                message_ids=tuple(m.id for m in members),
                mention_fraction=fractions,
            )
        )
    return bins
