"""Fine-tune dataset export: one JSON record per line, one story per record.

Each record is the exact three-turn conversation a training pipeline needs:
the estimation system prompt, the story as the user turn, and the sentinel
answer as the assistant turn. Reading a file back yields the conversations
and points unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, List, Tuple, Union

from ..core import UserStory, ValidationError
from ..points import PointsLike, as_points
from .bindings import ChatTurn
from .estimation import (
    ESTIMATE_SENTINEL,
    parse_estimate_reply,
    render_estimate_reply,
    render_estimation_conversation,
)

CorpusItem = Union[UserStory, Tuple[UserStory, PointsLike]]


@dataclass(frozen=True)
class FinetuneRecord:
    """One parsed line of an exported dataset."""

    story_id: str
    turns: Tuple[ChatTurn, ...]
    points: Fraction


def _normalize(item: CorpusItem) -> Tuple[UserStory, Fraction]:
    if isinstance(item, UserStory):
        story, points = item, item.ground_truth_points
    else:
        story, points = item
    if points is None:
        raise ValidationError(f"story {story.id!r} has no ground-truth points")
    return story, as_points(points)


def export_finetune_dataset(
    corpus: Iterable[CorpusItem],
    destination: Union[str, Path],
    include_description: bool = False,
) -> int:
    """Write the corpus as line-delimited JSON records; returns the count.

    The description flag defaults off to match summary-keyed training
    corpora; flip it on when stories carry acceptance criteria the model
    should see.
    """
    rows = [_normalize(item) for item in corpus]
    written = 0
    with open(destination, "w", encoding="utf-8") as fp:
        for story, points in rows:
            turns = render_estimation_conversation(story, include_description)
            turns.append(ChatTurn(role="assistant", content=render_estimate_reply(points)))
            record = {
                "story_id": story.id,
                "messages": [t.to_dict() for t in turns],
            }
            fp.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
            written += 1
    return written


def read_finetune_dataset(path: Union[str, Path]) -> List[FinetuneRecord]:
    """Parse an exported dataset, validating each record's shape."""
    records: List[FinetuneRecord] = []
    with open(path, "r", encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as err:
                raise ValidationError(f"line {lineno} of {path}: {err}") from err
            try:
                turns = tuple(
                    ChatTurn(role=m["role"], content=m["content"])
                    for m in raw["messages"]
                )
                story_id = raw["story_id"]
            except (KeyError, TypeError) as err:
                raise ValidationError(
                    f"line {lineno} of {path}: bad record shape ({err})"
                ) from err
            if len(turns) != 3 or [t.role for t in turns] != ["system", "user", "assistant"]:
                raise ValidationError(
                    f"line {lineno} of {path}: expected system/user/assistant turns"
                )
            if ESTIMATE_SENTINEL not in turns[2].content:
                raise ValidationError(
                    f"line {lineno} of {path}: assistant turn lacks the sentinel"
                )
            records.append(
                FinetuneRecord(
                    story_id=story_id,
                    turns=turns,
                    points=parse_estimate_reply(turns[2].content),
                )
            )
    return records
