"""Line-record (JSON Lines) reading and writing shared by all file formats."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator


def iter_records(source: bytes | str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_number, record) pairs, skipping blank lines.

    Raises ValueError with the 1-based line number for lines that are not
    valid JSON objects.
    """
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    else:
        text = source
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as err:
            raise ValueError(f"line {line_no}: invalid JSON ({err.msg})") from err
        if not isinstance(record, dict):
            raise ValueError(f"line {line_no}: expected an object, got {type(record).__name__}")
        yield line_no, record


def dump_records(records: Iterable[dict[str, Any]]) -> str:
    """Serialize records one per line with a stable key order."""
    lines = [json.dumps(r, sort_keys=True, ensure_ascii=False) for r in records]
    return "".join(line + "\n" for line in lines)


def write_records(path: Path, records: Iterable[dict[str, Any]]) -> None:
    path.write_text(dump_records(records), encoding="utf-8")
