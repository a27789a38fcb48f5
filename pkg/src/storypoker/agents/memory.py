"""Short-term memory M_s: everything an agent knows about its session.

Fed exclusively by session events (redacted, participant-facing payloads);
event application is idempotent per sequence number so duplicate delivery
during reconnects is harmless.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Set, Tuple

from ..core import Participant, UserStory, ValidationError
from ..events import EventKind, SessionEvent
from ..points import parse_points
from ..session import ChatMessage
from .similarity import Example


@dataclass
class ShortTermMemory:
    """Per-session agent context.

    `peer_estimates_by_round` only ever holds revealed rounds: it is
    populated from round_revealed events, never from submissions.
    """

    role_label: str
    session_id: Optional[str] = None
    participant_id: Optional[str] = None
    story: Optional[UserStory] = None
    participants: Dict[str, Participant] = field(default_factory=dict)
    present: Set[str] = field(default_factory=set)
    chat_history: List[ChatMessage] = field(default_factory=list)
    peer_estimates_by_round: Dict[int, Dict[str, Fraction]] = field(default_factory=dict)
    own_estimates: Dict[int, Fraction] = field(default_factory=dict)
    submitted_by_round: Dict[int, Set[str]] = field(default_factory=dict)
    reasoning_trace: List[dict] = field(default_factory=list)
    selected_examples: List[Example] = field(default_factory=list)
    current_round: int = 0
    story_presented_at: int = 0
    last_applied: int = 0

    def bind(self, session_id: str, participant_id: str) -> None:
        self.session_id = session_id
        self.participant_id = participant_id

    def record(self, **entry) -> None:
        self.reasoning_trace.append(entry)

    def apply_event(self, event: SessionEvent, session_id: Optional[str] = None) -> bool:
        """Fold one session event into memory.

        Returns False (no-op) for already-applied sequence numbers; raises
        for events of a different session than the one bound.
        """
        if session_id is not None and self.session_id is not None and session_id != self.session_id:
            raise ValidationError(
                f"event from foreign session {session_id!r} "
                f"(bound to {self.session_id!r})"
            )
        if event.sequence <= self.last_applied:
            return False
        self.last_applied = event.sequence
        payload = event.payload
        kind = event.kind
        if kind is EventKind.JOINED:
            raw = payload["participant"]
            participant = Participant(
                id=raw["id"],
                display_name=raw["display_name"],
                kind=raw["kind"],
                role_label=raw["role_label"],
            )
            self.participants[participant.id] = participant
            self.present.add(participant.id)
        elif kind is EventKind.LEFT:
            self.present.discard(payload["participant_id"])
        elif kind is EventKind.STORY_PRESENTED:
            raw = payload["story"]
            self.story = UserStory(
                id=raw["id"], title=raw["title"], description=raw["description"]
            )
            self.story_presented_at = event.sequence
            self.peer_estimates_by_round = {}
            self.own_estimates = {}
            self.submitted_by_round = {}
            self.current_round = 0
        elif kind is EventKind.ROUND_STARTED:
            self.current_round = payload["index"]
        elif kind is EventKind.CHAT:
            self.chat_history.append(
                ChatMessage(
                    sender_id=payload["sender_id"],
                    body=payload["body"],
                    sequence=event.sequence,
                    round_index=payload["round_index"],
                )
            )
        elif kind is EventKind.ESTIMATE_SUBMITTED:
            # participant-facing payloads carry no value, only who submitted
            self.submitted_by_round.setdefault(payload["round_index"], set()).add(
                payload["participant_id"]
            )
        elif kind is EventKind.ROUND_REVEALED:
            revealed = {
                item["participant_id"]: parse_points(item["points"])
                for item in payload["estimates"]
            }
            own = revealed.pop(self.participant_id, None)
            if own is not None:
                self.own_estimates[payload["index"]] = own
            self.peer_estimates_by_round[payload["index"]] = revealed
        elif kind is EventKind.STORY_FINALIZED:
            self.story = None
            self.current_round = 0
        # consensus_reached / round_limit_reached carry no memory beyond the
        # reveal itself
        return True

    def chat_in_round(self, round_index: int) -> List[ChatMessage]:
        return [
            m
            for m in self.chat_history
            if m.round_index == round_index and m.sequence > self.story_presented_at
        ]

    def latest_own_estimate(self) -> Optional[Fraction]:
        if not self.own_estimates:
            return None
        return self.own_estimates[max(self.own_estimates)]

    def latest_peer_estimates(self) -> Optional[Dict[str, Fraction]]:
        for index in sorted(self.peer_estimates_by_round, reverse=True):
            if self.peer_estimates_by_round[index]:
                return self.peer_estimates_by_round[index]
        return None
