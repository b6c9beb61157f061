"""Dense-vector store for tweet, frame, and face embeddings.

Vectors are opaque inputs produced elsewhere; this module only validates,
indexes, and queries them. Cosine similarity and centroids are the shared
primitives behind both the tweet and the frame selectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import jsonl

KINDS = ("tweet", "frame", "face")


class StoreError(ValueError):
    """Raised for malformed or inconsistent vector files."""


@dataclass(frozen=True)
class EmbeddedItem:
    id: str
    t: int
    kind: str
    vector: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise StoreError(f"unknown item kind {self.kind!r}")


@dataclass(frozen=True)
class FaceRecord:
    """A face embedding tied to its source frame, with optional weak labels."""

    embedded: EmbeddedItem
    frame_id: str
    weak_labels: frozenset[str] = frozenset()
    episode: int = 0

    @property
    def id(self) -> str:
        return self.embedded.id

    @property
    def t(self) -> int:
        return self.embedded.t


class EmbeddingStore:
    """Dimension-consistent collection of EmbeddedItems, indexed by id and time."""

    def __init__(self, items: Sequence[EmbeddedItem]):
        self.items: list[EmbeddedItem] = sorted(items, key=lambda it: (it.t, it.id))
        self.dim: int | None = self.items[0].vector.shape[0] if self.items else None
        self._by_id: dict[str, EmbeddedItem] = {}
        for item in self.items:
            if item.id in self._by_id:
                raise StoreError(f"duplicate item id {item.id!r}")
            self._by_id[item.id] = item

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._by_id

    def get(self, item_id: str) -> EmbeddedItem:
        try:
            return self._by_id[item_id]
        except KeyError:
            raise StoreError(f"no item with id {item_id!r}") from None

    def in_window(self, start_t: int, end_t: int, kind: str | None = None) -> list[EmbeddedItem]:
        """Items with start_t <= t < end_t, optionally restricted to one kind."""
        return [
            it
            for it in self.items
            if start_t <= it.t < end_t and (kind is None or it.kind == kind)
        ]


def _parse_vector(record: dict, line_no: int) -> np.ndarray:
    raw = record.get("vec")
    if not isinstance(raw, list) or not raw:
        raise StoreError(f"line {line_no}: 'vec' must be a non-empty array")
    vec = np.asarray(raw, dtype=np.float64)
    if vec.ndim != 1:
        raise StoreError(f"line {line_no}: 'vec' must be one-dimensional")
    return vec


def load_store(source: bytes | str | Path) -> EmbeddingStore:
    """Load vector-file records {id, t, kind, vec} into a store.

    The dimension is inferred from the first record and enforced thereafter;
    a mismatch error names both the first item and the offending one.
    """
    items: list[EmbeddedItem] = []
    first_id: str | None = None
    dim: int | None = None
    for line_no, record in jsonl.iter_records(source):
        item_id = record.get("id")
        if not isinstance(item_id, str) or not item_id:
            raise StoreError(f"line {line_no}: missing item 'id'")
        vec = _parse_vector(record, line_no)
        if not np.all(np.isfinite(vec)):
            raise StoreError(f"non-finite value in vector for id {item_id!r}")
        if dim is None:
            dim, first_id = vec.shape[0], item_id
        elif vec.shape[0] != dim:
            raise StoreError(
                f"dimension mismatch: id {first_id!r} has {dim}, id {item_id!r} "
                f"has {vec.shape[0]}"
            )
        vec.setflags(write=False)
        items.append(
            EmbeddedItem(
                id=item_id,
                t=int(record.get("t", 0)),
                kind=str(record.get("kind", "tweet")),
                vector=vec,
            )
        )
    return EmbeddingStore(items)


def load_face_records(source: bytes | str | Path) -> list[FaceRecord]:
    """Load face vector records, which additionally carry frame_id and may
    carry weak labels and an episode index."""
    store = load_store(source)
    records = []
    for line_no, record in jsonl.iter_records(source):
        item = store.get(record["id"])
        if item.kind != "face":
            raise StoreError(f"line {line_no}: face file contains kind {item.kind!r}")
        frame_id = record.get("frame_id")
        if not isinstance(frame_id, str) or not frame_id:
            raise StoreError(f"face {item.id!r} is missing its frame_id")
        records.append(
            FaceRecord(
                embedded=item,
                frame_id=frame_id,
                weak_labels=frozenset(record.get("labels", [])),
                episode=int(record.get("episode", 0)),
            )
        )
    return records


def serialize_items(items: Iterable[EmbeddedItem]) -> str:
    return jsonl.dump_records(
        {"id": it.id, "t": it.t, "kind": it.kind, "vec": [float(x) for x in it.vector]}
        for it in items
    )


def serialize_face_records(records: Iterable[FaceRecord]) -> str:
    return jsonl.dump_records(
        {
            "id": r.id,
            "t": r.t,
            "kind": "face",
            "vec": [float(x) for x in r.embedded.vector],
            "frame_id": r.frame_id,
            "labels": sorted(r.weak_labels),
            "episode": r.episode,
        }
        for r in records
    )


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; zero-norm inputs are rejected."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise StoreError("cosine is undefined for zero-norm vectors")
    return float(np.dot(u, v) / (nu * nv))


def centroid(items: Sequence[EmbeddedItem]) -> np.ndarray:
    """Coordinate-wise mean of the items' vectors."""
    if not items:
        raise StoreError("centroid of an empty item list is undefined")
    stacked = np.stack([it.vector for it in items])
    return stacked.mean(axis=0)


def nearest_to_centroid(
    items: Sequence[EmbeddedItem],
    accept: Callable[[EmbeddedItem], bool] = lambda item: True,
) -> EmbeddedItem | None:
    """The accepted item most cosine-similar to the centroid of ALL items.

    The centroid is taken over every item (not just accepted ones), matching
    the selection rule of computing a period centroid first and constraining
    the choice afterwards. Ties break by earlier t, then lexicographic id.
    Returns None when no item is accepted, so the caller can fall back.
    """
    candidates = [it for it in items if accept(it)]
    if not candidates:
        return None
    center = centroid(list(items))
    best = None
    best_key = None
    for it in candidates:
        key = (-_safe_cosine(it.vector, center), it.t, it.id)
        if best_key is None or key < best_key:
            best, best_key = it, key
    return best


def _safe_cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine for ranking: zero-norm operands sort below every real cosine
    instead of raising, so degenerate vectors can never crash a selection."""
    if np.linalg.norm(u) == 0.0 or np.linalg.norm(v) == 0.0:
        return -2.0
    return cosine(u, v)
