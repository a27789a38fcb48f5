"""The Planning Poker state machine.

Rounds of hidden estimates, reveal, discussion, and re-estimation until
consensus or the round limit; every transition is an appended SessionEvent
and replaying the log rebuilds the state exactly.

Commands validate against current state, emit events, and apply them; the
apply step is mechanical (decisions are frozen into payloads) so that live
execution and replay walk identical code.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .core import (
    DEFAULT_DECK,
    ConsensusRule,
    Deck,
    DomainError,
    Estimate,
    IncompleteRoundError,
    NotPermittedError,
    Participant,
    UserStory,
    ValidationError,
    check_consensus,
    fallback_aggregate,
)
from .events import (
    EventKind,
    ReplayError,
    SessionEvent,
    participant_payload,
    story_payload,
)
from .points import PointsError, PointsLike, as_points, format_points, parse_points

#: Disconnect-style reasons recorded on `left` events.
LEFT_DISCONNECTED = "disconnected"
LEFT_ABSENT = "absent"


class RoundPhase(str, Enum):
    ESTIMATING = "estimating"
    DISCUSSING = "discussing"
    REVEALED = "revealed"


class ConfigValidationError(ValidationError):
    """Session config rejected; `problems` itemizes every violation found."""

    def __init__(self, problems: Sequence[str]):
        self.problems = tuple(problems)
        super().__init__("invalid session config: " + "; ".join(self.problems))


@dataclass(frozen=True)
class SessionConfig:
    """Static parameters of one estimation session.

    `force_reveal_timeout_seconds` is advisory data for facilitators: how long
    a round may stall before force_reveal is reasonable. The engine itself
    keeps no clock.
    """

    participants: Tuple[Participant, ...]
    story_queue: Tuple[UserStory, ...] = ()
    deck: Deck = DEFAULT_DECK
    consensus_rule: ConsensusRule = field(default_factory=ConsensusRule.exact_match)
    max_rounds: int = 3
    force_reveal_timeout_seconds: float = 600.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "participants", tuple(self.participants))
        object.__setattr__(self, "story_queue", tuple(self.story_queue))
        problems: List[str] = []
        if not isinstance(self.max_rounds, int) or isinstance(self.max_rounds, bool):
            problems.append("max_rounds must be an integer")
        elif self.max_rounds < 1:
            problems.append(f"max_rounds must be >= 1, got {self.max_rounds}")
        ids = [p.id for p in self.participants]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            problems.append(f"duplicate participant ids: {', '.join(dupes)}")
        facilitators = [p for p in self.participants if not p.is_estimator]
        if len(facilitators) != 1:
            problems.append(f"exactly one facilitator required, got {len(facilitators)}")
        estimators = [p for p in self.participants if p.is_estimator]
        if len(estimators) < 2:
            problems.append(f"at least two estimators required, got {len(estimators)}")
        story_ids = [s.id for s in self.story_queue]
        if len(set(story_ids)) != len(story_ids):
            problems.append("duplicate story ids in queue")
        if not (self.force_reveal_timeout_seconds >= 0):
            problems.append("force_reveal_timeout_seconds must be >= 0")
        if problems:
            raise ConfigValidationError(problems)

    @property
    def facilitator(self) -> Participant:
        return next(p for p in self.participants if not p.is_estimator)


@dataclass
class ChatMessage:
    """One entry of the conversation history H.

    `sequence` is the global session sequence number (shared with the event
    log), so messages are totally ordered across rounds. `round_index` is 0
    for lobby chatter outside any round.
    """

    sender_id: str
    body: str
    sequence: int
    round_index: int

    def to_dict(self) -> dict:
        return {
            "sender_id": self.sender_id,
            "body": self.body,
            "sequence": self.sequence,
            "round_index": self.round_index,
        }


@dataclass
class RoundState:
    """One estimation round of the active story.

    `required` is pinned when the round starts (present estimators at that
    moment); `absent` shrinks it. Estimates stay hidden until the phase
    leaves `estimating`.
    """

    index: int
    story_id: str
    required: Tuple[str, ...]
    phase: RoundPhase = RoundPhase.ESTIMATING
    absent: Set[str] = field(default_factory=set)
    estimates: Dict[str, Estimate] = field(default_factory=dict)
    chat: List[ChatMessage] = field(default_factory=list)
    consensus: Optional[bool] = None
    outcome: Optional[str] = None

    @property
    def effective_required(self) -> Set[str]:
        return set(self.required) - self.absent

    @property
    def is_complete(self) -> bool:
        return self.effective_required <= set(self.estimates)

    def missing(self) -> Tuple[str, ...]:
        return tuple(sorted(self.effective_required - set(self.estimates)))

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "story_id": self.story_id,
            "required": list(self.required),
            "phase": self.phase.value,
            "absent": sorted(self.absent),
            "estimates": {
                pid: {
                    "points": format_points(e.points),
                    "submitted_at": e.submitted_at,
                }
                for pid, e in sorted(self.estimates.items())
            },
            "chat": [m.to_dict() for m in self.chat],
            "consensus": self.consensus,
            "outcome": self.outcome,
        }


@dataclass
class StoryResult:
    """Final estimate for one story. `consensus` is False when the round
    limit forced a fallback aggregate."""

    story: UserStory
    points: Fraction
    consensus: bool
    rounds: List[RoundState]
    finalized_at: int

    def to_dict(self) -> dict:
        return {
            "story": story_payload(self.story),
            "points": format_points(self.points),
            "consensus": self.consensus,
            "rounds": [r.to_dict() for r in self.rounds],
            "finalized_at": self.finalized_at,
        }


class Session:
    """A live estimation session.

    All commands are serialized under one lock, giving the single-writer
    total order the event log requires; reads return snapshots. Snapshots
    and the raw event list include hidden estimate values and are for
    auditing - participant-facing transports must redact via the wire
    protocol rules.
    """

    def __init__(self, config: SessionConfig):
        self._config = config
        self._roster: Dict[str, Participant] = {p.id: p for p in config.participants}
        self._present: Set[str] = set()
        self._queue: List[UserStory] = list(config.story_queue)
        self._story: Optional[UserStory] = None
        self._rounds: List[RoundState] = []
        self._results: List[StoryResult] = []
        self._history: List[ChatMessage] = []
        self._events: List[SessionEvent] = []
        self._listeners: List[Callable[[SessionEvent], None]] = []
        self._lock = threading.RLock()

    # ------------------------------------------------------------- reads

    @property
    def config(self) -> SessionConfig:
        return self._config

    @property
    def last_sequence(self) -> int:
        with self._lock:
            return len(self._events)

    def events(self) -> Tuple[SessionEvent, ...]:
        with self._lock:
            return tuple(self._events)

    def participants(self) -> Tuple[Participant, ...]:
        return tuple(self._roster.values())

    def participant(self, participant_id: str) -> Participant:
        try:
            return self._roster[participant_id]
        except KeyError:
            raise ValidationError(f"unknown participant {participant_id!r}") from None

    def present_ids(self) -> Set[str]:
        with self._lock:
            return set(self._present)

    def current_story(self) -> Optional[UserStory]:
        with self._lock:
            return self._story

    def current_round(self) -> Optional[RoundState]:
        with self._lock:
            return self._rounds[-1] if self._rounds else None

    def results(self) -> Tuple[StoryResult, ...]:
        with self._lock:
            return tuple(self._results)

    def pending_stories(self) -> Tuple[UserStory, ...]:
        with self._lock:
            return tuple(self._queue)

    def snapshot(self) -> dict:
        """Full JSON-ready state, used for replay equality and admin audit.

        Contains hidden estimates and queued ground truths; never send this
        to participants.
        """
        with self._lock:
            return {
                "sequence": len(self._events),
                "present": sorted(self._present),
                "roster": {pid: participant_payload(p) for pid, p in sorted(self._roster.items())},
                "queue": [
                    dict(
                        story_payload(s),
                        ground_truth_points=(
                            None
                            if s.ground_truth_points is None
                            else format_points(s.ground_truth_points)
                        ),
                    )
                    for s in self._queue
                ],
                "story": None if self._story is None else story_payload(self._story),
                "rounds": [r.to_dict() for r in self._rounds],
                "results": [r.to_dict() for r in self._results],
                "history": [m.to_dict() for m in self._history],
            }

    def subscribe(self, listener: Callable[[SessionEvent], None]) -> Callable[[], None]:
        """Register a per-event callback, invoked in log order after each
        event is applied. Returns an unsubscribe function. Callbacks run
        under the session lock and must not issue session commands."""
        with self._lock:
            self._listeners.append(listener)

        def unsubscribe() -> None:
            with self._lock:
                if listener in self._listeners:
                    self._listeners.remove(listener)

        return unsubscribe

    # ---------------------------------------------------------- commands

    def join(self, participant_id: str) -> SessionEvent:
        with self._lock:
            participant = self.participant(participant_id)
            if participant_id in self._present:
                raise ValidationError(f"participant {participant_id!r} already joined")
            return self._emit(
                EventKind.JOINED, {"participant": participant_payload(participant)}
            )

    def leave(self, participant_id: str) -> SessionEvent:
        """Voluntary or connection-loss departure. A pending estimate is
        kept; an unsubmitted requirement stays until mark_absent."""
        with self._lock:
            self.participant(participant_id)
            if participant_id not in self._present:
                raise ValidationError(f"participant {participant_id!r} is not present")
            return self._emit(
                EventKind.LEFT,
                {"participant_id": participant_id, "reason": LEFT_DISCONNECTED},
            )

    def present_story(
        self, caller_id: str, story: Optional[UserStory] = None
    ) -> List[SessionEvent]:
        """Open round 1 for the next queued story, or for an ad-hoc one."""
        with self._lock:
            self._require_facilitator(caller_id)
            if self._story is not None:
                raise ValidationError(
                    f"story {self._story.id!r} is still active"
                )
            self._require_present_estimator()
            if story is None:
                if not self._queue:
                    raise ValidationError("story queue is empty")
                story = self._queue[0]
                from_queue = True
            else:
                from_queue = bool(self._queue) and story.id == self._queue[0].id
                if from_queue:
                    story = self._queue[0]
                else:
                    used = {s.id for s in self._queue} | {r.story.id for r in self._results}
                    if story.id in used:
                        raise ValidationError(f"story id {story.id!r} already used")
            return self._open_story(story, from_queue)

    def post_chat(self, sender_id: str, body: str) -> SessionEvent:
        with self._lock:
            self.participant(sender_id)
            if sender_id not in self._present:
                raise ValidationError(f"participant {sender_id!r} is not present")
            if not body or not body.strip():
                raise ValidationError("chat body must be nonempty")
            round_index = self._rounds[-1].index if self._story and self._rounds else 0
            return self._emit(
                EventKind.CHAT,
                {"sender_id": sender_id, "body": body, "round_index": round_index},
            )

    def submit_estimate(self, participant_id: str, points: PointsLike) -> List[SessionEvent]:
        """Record a hidden estimate; resubmission before reveal overwrites.
        The last missing estimator's submission auto-reveals the round."""
        with self._lock:
            participant = self.participant(participant_id)
            if participant_id not in self._present:
                raise ValidationError(f"participant {participant_id!r} is not present")
            if not participant.is_estimator:
                raise NotPermittedError("the facilitator never submits estimates")
            rnd = self._open_round(RoundPhase.ESTIMATING, "no round open for estimation")
            try:
                value = as_points(points)
            except PointsError as err:
                raise ValidationError(str(err)) from err
            if value not in self._config.deck.values:
                raise ValidationError(
                    f"estimate {format_points(value)} is not in the deck"
                )
            emitted = [
                self._emit(
                    EventKind.ESTIMATE_SUBMITTED,
                    {
                        "participant_id": participant_id,
                        "round_index": rnd.index,
                        "points": format_points(value),
                    },
                )
            ]
            if rnd.is_complete:
                emitted.extend(self._reveal_batch())
            return emitted

    def reveal_round(self) -> List[SessionEvent]:
        """Reveal the open round. Normally triggered automatically by the
        last submission; raises IncompleteRoundError while estimates are
        missing."""
        with self._lock:
            rnd = self._open_round(RoundPhase.ESTIMATING, "no round open to reveal")
            if not rnd.is_complete:
                raise IncompleteRoundError(rnd.missing())
            return self._reveal_batch()

    def start_next_round(self, caller_id: str) -> SessionEvent:
        with self._lock:
            self._require_facilitator(caller_id)
            rnd = self._open_round(RoundPhase.DISCUSSING, "no round in discussion")
            if rnd.index >= self._config.max_rounds:
                raise ValidationError("round limit already reached")
            self._require_present_estimator()
            return self._start_round(rnd.story_id, rnd.index + 1)

    def mark_absent(self, caller_id: str, participant_id: str) -> List[SessionEvent]:
        """Facilitator excuses a non-submitting estimator from the open
        round, shrinking its required set. Marking the last required
        estimator is rejected while the round has no estimates at all."""
        with self._lock:
            self._require_facilitator(caller_id)
            self.participant(participant_id)
            rnd = self._open_round(RoundPhase.ESTIMATING, "no round open for estimation")
            if participant_id not in rnd.effective_required:
                raise ValidationError(
                    f"participant {participant_id!r} is not required this round"
                )
            if participant_id in rnd.estimates:
                raise ValidationError(
                    f"participant {participant_id!r} already submitted"
                )
            if rnd.effective_required == {participant_id} and not rnd.estimates:
                raise ValidationError(
                    "cannot mark the last required estimator absent before any estimate"
                )
            emitted = [
                self._emit(
                    EventKind.LEFT,
                    {
                        "participant_id": participant_id,
                        "reason": LEFT_ABSENT,
                        "round_index": rnd.index,
                    },
                )
            ]
            if rnd.is_complete:
                emitted.extend(self._reveal_batch())
            return emitted

    def force_reveal(self, caller_id: str) -> List[SessionEvent]:
        """Facilitator ends a stalled round: every missing estimator is
        marked absent and the submitted estimates are revealed."""
        with self._lock:
            self._require_facilitator(caller_id)
            rnd = self._open_round(RoundPhase.ESTIMATING, "no round open for estimation")
            if not rnd.estimates:
                raise ValidationError("cannot force-reveal a round with no estimates")
            emitted = []
            for pid in rnd.missing():
                emitted.append(
                    self._emit(
                        EventKind.LEFT,
                        {
                            "participant_id": pid,
                            "reason": LEFT_ABSENT,
                            "round_index": rnd.index,
                        },
                    )
                )
            emitted.extend(self._reveal_batch())
            return emitted

    # ----------------------------------------------------------- helpers

    def _require_facilitator(self, caller_id: str) -> None:
        participant = self.participant(caller_id)
        if participant.is_estimator:
            raise NotPermittedError(
                f"participant {caller_id!r} is not the facilitator"
            )
        if caller_id not in self._present:
            raise ValidationError(f"facilitator {caller_id!r} is not present")

    def _require_present_estimator(self) -> None:
        if not any(self._roster[pid].is_estimator for pid in self._present):
            raise ValidationError("no estimator is present")

    def _open_round(self, phase: RoundPhase, message: str) -> RoundState:
        if self._story is None or not self._rounds:
            raise ValidationError(message)
        rnd = self._rounds[-1]
        if rnd.phase is not phase:
            raise ValidationError(f"{message} (phase is {rnd.phase.value})")
        return rnd

    def _open_story(self, story: UserStory, from_queue: bool) -> List[SessionEvent]:
        emitted = [
            self._emit(
                EventKind.STORY_PRESENTED,
                {"story": story_payload(story), "from_queue": from_queue},
            ),
            self._start_round(story.id, 1),
        ]
        return emitted

    def _start_round(self, story_id: str, index: int) -> SessionEvent:
        required = sorted(
            pid for pid in self._present if self._roster[pid].is_estimator
        )
        return self._emit(
            EventKind.ROUND_STARTED,
            {"story_id": story_id, "index": index, "required": required},
        )

    def _reveal_batch(self) -> List[SessionEvent]:
        """Reveal the open round and append whatever follows from it:
        consensus, round-limit fallback, finalization, next queued story."""
        rnd = self._rounds[-1]
        ordered = [rnd.estimates[pid] for pid in sorted(rnd.estimates)]
        consensus = check_consensus(ordered, self._config.consensus_rule)
        emitted = [
            self._emit(
                EventKind.ROUND_REVEALED,
                {
                    "story_id": rnd.story_id,
                    "index": rnd.index,
                    "consensus": consensus,
                    "estimates": [
                        {
                            "participant_id": e.participant_id,
                            "points": format_points(e.points),
                            "submitted_at": e.submitted_at,
                        }
                        for e in ordered
                    ],
                },
            )
        ]
        at_limit = rnd.index >= self._config.max_rounds
        if consensus:
            values = {e.points for e in ordered}
            final = values.pop() if len(values) == 1 else fallback_aggregate(
                ordered, self._config.deck
            )
            emitted.append(
                self._emit(
                    EventKind.CONSENSUS_REACHED,
                    {
                        "story_id": rnd.story_id,
                        "index": rnd.index,
                        "points": format_points(final),
                    },
                )
            )
        elif at_limit:
            final = fallback_aggregate(ordered, self._config.deck)
            emitted.append(
                self._emit(
                    EventKind.ROUND_LIMIT_REACHED,
                    {"story_id": rnd.story_id, "index": rnd.index},
                )
            )
        else:
            return emitted
        emitted.append(
            self._emit(
                EventKind.STORY_FINALIZED,
                {
                    "story_id": rnd.story_id,
                    "points": format_points(final),
                    "consensus": consensus,
                    "rounds": rnd.index,
                },
            )
        )
        if self._queue and any(
            self._roster[pid].is_estimator for pid in self._present
        ):
            emitted.extend(self._open_story(self._queue[0], from_queue=True))
        return emitted

    # ------------------------------------------------------ event engine

    def _emit(self, kind: EventKind, payload: dict) -> SessionEvent:
        event = SessionEvent(sequence=len(self._events) + 1, kind=kind, payload=payload)
        self._apply(event)
        self._events.append(event)
        for listener in list(self._listeners):
            listener(event)
        return event

    def _apply(self, event: SessionEvent) -> None:
        """Mutate state from one event. Mechanical: no decisions are made
        here beyond structural validation, so replay cannot diverge."""
        payload = event.payload
        kind = event.kind
        if kind is EventKind.JOINED:
            recorded = payload["participant"]
            pid = recorded["id"]
            known = self._roster.get(pid)
            if known is None or participant_payload(known) != recorded:
                raise ReplayError(
                    f"event {event.sequence}: joined participant does not match roster",
                    sequence=event.sequence,
                )
            self._present.add(pid)
        elif kind is EventKind.LEFT:
            pid = payload["participant_id"]
            if pid not in self._roster:
                raise ReplayError(
                    f"event {event.sequence}: left by unknown participant {pid!r}",
                    sequence=event.sequence,
                )
            self._present.discard(pid)
            if payload.get("reason") == LEFT_ABSENT:
                rnd = self._expect_round(event, payload["round_index"])
                rnd.absent.add(pid)
        elif kind is EventKind.STORY_PRESENTED:
            raw = payload["story"]
            story = UserStory(
                id=raw["id"], title=raw["title"], description=raw["description"]
            )
            if self._story is not None:
                raise ReplayError(
                    f"event {event.sequence}: story presented while one is active",
                    sequence=event.sequence,
                )
            if payload["from_queue"]:
                if not self._queue or self._queue[0].id != story.id:
                    raise ReplayError(
                        f"event {event.sequence}: queue head does not match presented story",
                        sequence=event.sequence,
                    )
                self._queue.pop(0)
            self._story = story
            self._rounds = []
        elif kind is EventKind.ROUND_STARTED:
            if self._story is None or self._story.id != payload["story_id"]:
                raise ReplayError(
                    f"event {event.sequence}: round started for inactive story",
                    sequence=event.sequence,
                )
            expected_index = self._rounds[-1].index + 1 if self._rounds else 1
            if payload["index"] != expected_index:
                raise ReplayError(
                    f"event {event.sequence}: round index {payload['index']} out of order",
                    sequence=event.sequence,
                )
            self._rounds.append(
                RoundState(
                    index=payload["index"],
                    story_id=payload["story_id"],
                    required=tuple(payload["required"]),
                )
            )
        elif kind is EventKind.CHAT:
            message = ChatMessage(
                sender_id=payload["sender_id"],
                body=payload["body"],
                sequence=event.sequence,
                round_index=payload["round_index"],
            )
            self._history.append(message)
            if (
                self._story is not None
                and self._rounds
                and self._rounds[-1].index == message.round_index
            ):
                self._rounds[-1].chat.append(message)
        elif kind is EventKind.ESTIMATE_SUBMITTED:
            rnd = self._expect_round(event, payload["round_index"])
            pid = payload["participant_id"]
            if pid not in self._roster:
                raise ReplayError(
                    f"event {event.sequence}: estimate by unknown participant {pid!r}",
                    sequence=event.sequence,
                )
            rnd.estimates[pid] = Estimate(
                participant_id=pid,
                round_index=rnd.index,
                points=parse_points(payload["points"]),
                submitted_at=event.sequence,
            )
        elif kind is EventKind.ROUND_REVEALED:
            rnd = self._expect_round(event, payload["index"])
            for item in payload["estimates"]:
                held = rnd.estimates.get(item["participant_id"])
                if held is None or format_points(held.points) != item["points"]:
                    raise ReplayError(
                        f"event {event.sequence}: revealed estimates do not match state",
                        sequence=event.sequence,
                    )
            rnd.consensus = payload["consensus"]
            terminal = payload["consensus"] or rnd.index >= self._config.max_rounds
            rnd.phase = RoundPhase.REVEALED if terminal else RoundPhase.DISCUSSING
        elif kind is EventKind.CONSENSUS_REACHED:
            rnd = self._expect_round(event, payload["index"])
            rnd.outcome = "consensus"
        elif kind is EventKind.ROUND_LIMIT_REACHED:
            rnd = self._expect_round(event, payload["index"])
            rnd.outcome = "round_limit"
        elif kind is EventKind.STORY_FINALIZED:
            if self._story is None or self._story.id != payload["story_id"]:
                raise ReplayError(
                    f"event {event.sequence}: finalized story is not active",
                    sequence=event.sequence,
                )
            self._results.append(
                StoryResult(
                    story=self._story,
                    points=parse_points(payload["points"]),
                    consensus=payload["consensus"],
                    rounds=self._rounds,
                    finalized_at=event.sequence,
                )
            )
            self._story = None
            self._rounds = []
        else:  # pragma: no cover - EventKind is closed
            raise ReplayError(f"unhandled event kind {kind}", sequence=event.sequence)

    def _expect_round(self, event: SessionEvent, index: int) -> RoundState:
        if self._story is None or not self._rounds or self._rounds[-1].index != index:
            raise ReplayError(
                f"event {event.sequence}: no open round with index {index}",
                sequence=event.sequence,
            )
        return self._rounds[-1]


def create_session(config: SessionConfig) -> Session:
    """New session in lobby state: empty log, nobody joined, no story."""
    return Session(config)


def replay(config: SessionConfig, events: Iterable[SessionEvent]) -> Session:
    """Rebuild a session from its config and event log.

    The log must be the exact sequence this engine produced: contiguous
    sequence numbers from 1, with payloads consistent with the evolving
    state. The first offending event is named otherwise.
    """
    session = Session(config)
    expected = 1
    for event in events:
        if event.sequence != expected:
            raise ReplayError(
                f"event out of order: expected sequence {expected}, got {event.sequence}",
                sequence=event.sequence,
            )
        try:
            session._apply(event)
        except ReplayError:
            raise
        except DomainError as err:
            raise ReplayError(
                f"event {event.sequence} cannot be applied: {err}",
                sequence=event.sequence,
            ) from err
        session._events.append(event)
        expected += 1
    return session
