"""Pick the single message that best describes each detected scene."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

from .corpus import AliasTable, Message
from .embeddings import EmbeddingStore, nearest_to_centroid
from .scenes import Scene


class SelectionError(ValueError):
    """Raised when a scene cannot be summarized from the given stores."""


class SelectionTier(Enum):
    """Which candidate restriction produced the selected tweet."""

    ALL_TRIGGERS = "all_triggers"
    ANY_TRIGGER = "any_trigger"
    UNRESTRICTED = "unrestricted"


@dataclass(frozen=True)
class TweetSelection:
    message_id: str
    tier: SelectionTier


def select_scene_tweet(
    scene: Scene,
    messages: Mapping[str, Message] | Iterable[Message],
    tweet_store: EmbeddingStore,
    aliases: AliasTable,
) -> TweetSelection:
    """The scene tweet: nearest to the scene centroid among tweets naming the
    scene's characters.

    The centroid is computed over all of the scene's tweets; the selection is
    restricted to tweets mentioning every trigger character, falling back to
    tweets mentioning any trigger character, then to no restriction at all.
    """
    if not scene.message_ids:
        raise SelectionError("scene has no messages to select from")
    by_id = (
        dict(messages) if isinstance(messages, Mapping) else {m.id: m for m in messages}
    )
    missing = [mid for mid in scene.message_ids if mid not in tweet_store]
    if missing:
        raise SelectionError(f"scene messages lack embeddings: {missing}")
    unknown = [mid for mid in scene.message_ids if mid not in by_id]
    if unknown:
        raise SelectionError(f"scene references unknown messages: {unknown}")

    items = [tweet_store.get(mid) for mid in scene.message_ids]
    mentioned = {mid: aliases.mentions(by_id[mid].text) for mid in scene.message_ids}
    triggers = scene.trigger_characters

    tiers = (
        (SelectionTier.ALL_TRIGGERS, lambda it: triggers <= mentioned[it.id]),
        (SelectionTier.ANY_TRIGGER, lambda it: bool(triggers & mentioned[it.id])),
        (SelectionTier.UNRESTRICTED, lambda it: True),
    )
    for tier, accept in tiers:
        chosen = nearest_to_centroid(items, accept)
        if chosen is not None:
            return TweetSelection(message_id=chosen.id, tier=tier)
    raise SelectionError("unreachable: unrestricted tier always has a candidate")
