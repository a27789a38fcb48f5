"""Append-only session event log.

Every state change in a session is recorded as one SessionEvent with a
contiguous sequence number starting at 1. Events serialize to canonical
single-line JSON (sorted keys, compact separators, raw unicode) so an event
log file round-trips byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional, Union

from .core import DomainError, Participant, UserStory


class ReplayError(DomainError):
    """An event log cannot be replayed verbatim.

    `sequence` names the first offending event when one can be identified.
    """

    def __init__(self, message: str, sequence: Optional[int] = None):
        super().__init__(message)
        self.sequence = sequence


class EventKind(str, Enum):
    JOINED = "joined"
    LEFT = "left"
    STORY_PRESENTED = "story_presented"
    ROUND_STARTED = "round_started"
    CHAT = "chat"
    ESTIMATE_SUBMITTED = "estimate_submitted"
    ROUND_REVEALED = "round_revealed"
    CONSENSUS_REACHED = "consensus_reached"
    ROUND_LIMIT_REACHED = "round_limit_reached"
    STORY_FINALIZED = "story_finalized"


def canonical_json(obj: object) -> str:
    """Deterministic JSON: sorted keys, no whitespace, unescaped unicode."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class SessionEvent:
    """One entry in a session's totally ordered audit log.

    The payload is a plain JSON-ready dict; point values inside payloads are
    canonical strings (see points.format_points) so serialization is exact.
    """

    sequence: int
    kind: EventKind
    payload: dict

    def __post_init__(self) -> None:
        if self.sequence < 1:
            raise ReplayError(f"event sequence must be >= 1, got {self.sequence}")
        object.__setattr__(self, "kind", EventKind(self.kind))

    def to_json(self) -> str:
        return canonical_json(
            {"sequence": self.sequence, "kind": self.kind.value, "payload": self.payload}
        )

    @classmethod
    def from_json(cls, line: str) -> "SessionEvent":
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as err:
            raise ReplayError(f"malformed event record: {err}") from err
        if not isinstance(raw, dict) or set(raw) != {"sequence", "kind", "payload"}:
            raise ReplayError(
                "event record must be an object with exactly sequence, kind, payload"
            )
        sequence = raw["sequence"]
        if not isinstance(sequence, int) or isinstance(sequence, bool) or sequence < 1:
            raise ReplayError(f"bad event sequence {sequence!r}")
        try:
            kind = EventKind(raw["kind"])
        except ValueError:
            raise ReplayError(f"unknown event kind {raw['kind']!r}", sequence=sequence)
        if not isinstance(raw["payload"], dict):
            raise ReplayError(f"event {sequence} payload must be an object", sequence=sequence)
        return cls(sequence=sequence, kind=kind, payload=raw["payload"])


def story_payload(story: UserStory) -> dict:
    """Story fields as logged and broadcast. Ground truth never appears."""
    return {"id": story.id, "title": story.title, "description": story.description}


def participant_payload(participant: Participant) -> dict:
    return {
        "id": participant.id,
        "display_name": participant.display_name,
        "kind": participant.kind.value,
        "role_label": participant.role_label,
    }


class EventLogWriter:
    """Appends events to an ndjson file, one canonical record per line."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._fp = open(self.path, "a", encoding="utf-8")

    def append(self, event: SessionEvent) -> None:
        self._fp.write(event.to_json() + "\n")
        self._fp.flush()

    def close(self) -> None:
        self._fp.close()

    def __enter__(self) -> "EventLogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_event_log(path: Union[str, Path]) -> List[SessionEvent]:
    """Parse an ndjson event log. Sequence contiguity is checked by replay."""
    events: List[SessionEvent] = []
    with open(path, "r", encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            line = line.rstrip("\n")
            if not line:
                raise ReplayError(f"blank line {lineno} in event log {path}")
            try:
                events.append(SessionEvent.from_json(line))
            except ReplayError as err:
                raise ReplayError(f"line {lineno} of {path}: {err}", err.sequence) from err
    return events


def iter_contiguous(events: List[SessionEvent]) -> Iterator[SessionEvent]:
    """Yield events while enforcing sequence 1, 2, 3, ... with no gaps."""
    expected = 1
    for event in events:
        if event.sequence != expected:
            raise ReplayError(
                f"event out of order: expected sequence {expected}, got {event.sequence}",
                sequence=event.sequence,
            )
        yield event
        expected += 1
