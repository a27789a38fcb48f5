"""Shared planning-poker vocabulary: stories, decks, participants, estimates,
and the consensus rules every other layer builds on.

Everything here is an immutable value type plus total functions over them;
instances are safe to share across threads.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Collection, Iterable, Optional, Sequence

from .points import PointsLike, as_points


class DomainError(Exception):
    """Base class for domain-rule violations."""


class ValidationError(DomainError):
    """A value or argument failed an invariant check."""


class NotPermittedError(DomainError):
    """The caller is not allowed to perform this session command."""


class IncompleteRoundError(DomainError):
    """A round-level operation ran before every required estimator submitted."""

    def __init__(self, missing: Collection[str]):
        self.missing = tuple(sorted(missing))
        super().__init__("missing estimates from: " + ", ".join(self.missing))


@dataclass(frozen=True)
class UserStory:
    """A natural-language work item, optionally labeled with its known effort.

    `ground_truth_points` is present only for historical stories in a
    benchmark corpus; live stories being estimated carry None.
    """

    id: str
    title: str
    description: Optional[str] = None
    ground_truth_points: Optional[Fraction] = None

    def __post_init__(self) -> None:
        if not str(self.id):
            raise ValidationError("story id must be nonempty")
        title = self.title.strip()
        if not title:
            raise ValidationError(f"story {self.id!r}: title must be nonempty")
        object.__setattr__(self, "title", title)
        if self.ground_truth_points is not None:
            object.__setattr__(
                self, "ground_truth_points", as_points(self.ground_truth_points)
            )

    def without_ground_truth(self) -> "UserStory":
        if self.ground_truth_points is None:
            return self
        return UserStory(id=self.id, title=self.title, description=self.description)


@dataclass(frozen=True)
class Deck:
    """The card values a session accepts as estimates."""

    values: tuple

    def __post_init__(self) -> None:
        converted = tuple(as_points(v) for v in self.values)
        if not converted:
            raise ValidationError("deck must have at least one value")
        for lower, upper in zip(converted, converted[1:]):
            if lower >= upper:
                raise ValidationError(
                    f"deck values must be strictly increasing, got {lower} before {upper}"
                )
        object.__setattr__(self, "values", converted)

    def __contains__(self, value: object) -> bool:
        try:
            return as_points(value) in self.values  # type: ignore[arg-type]
        except Exception:
            return False

    @property
    def median(self) -> Fraction:
        return statistics.median(self.values)


#: Fibonacci-style default; sessions may configure any strictly increasing deck.
DEFAULT_DECK = Deck((1, 2, 3, 5, 8, 13, 21))


class ParticipantKind(str, Enum):
    HUMAN = "human"
    AGENT = "agent"
    FACILITATOR = "facilitator"


@dataclass(frozen=True)
class Participant:
    """A session member. The facilitator presents stories and never estimates."""

    id: str
    display_name: str
    kind: ParticipantKind
    role_label: Optional[str] = None

    def __post_init__(self) -> None:
        if not str(self.id):
            raise ValidationError("participant id must be nonempty")
        if not self.display_name.strip():
            raise ValidationError(f"participant {self.id!r}: display_name must be nonempty")
        object.__setattr__(self, "kind", ParticipantKind(self.kind))
        if self.kind is ParticipantKind.AGENT and not (self.role_label or "").strip():
            raise ValidationError(f"agent participant {self.id!r} requires a role_label")

    @property
    def is_estimator(self) -> bool:
        return self.kind is not ParticipantKind.FACILITATOR


@dataclass(frozen=True)
class Estimate:
    """One participant's hidden card for one round."""

    participant_id: str
    round_index: int
    points: Fraction
    submitted_at: int

    def __post_init__(self) -> None:
        if self.round_index < 1:
            raise ValidationError(f"round_index must be >= 1, got {self.round_index}")
        if self.submitted_at < 0:
            raise ValidationError("submitted_at must be a non-negative sequence number")
        object.__setattr__(self, "points", as_points(self.points))


class ConsensusMode(str, Enum):
    EXACT_MATCH = "exact-match"
    MAX_SPREAD = "max-spread"


@dataclass(frozen=True)
class ConsensusRule:
    """When does a revealed round count as agreement.

    exact-match: all revealed estimates equal.
    max-spread: max - min <= spread.
    """

    mode: ConsensusMode
    spread: Optional[Fraction] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", ConsensusMode(self.mode))
        if self.mode is ConsensusMode.MAX_SPREAD:
            if self.spread is None:
                raise ValidationError("max-spread rule requires a spread")
            object.__setattr__(self, "spread", as_points(self.spread))
        elif self.spread is not None:
            raise ValidationError("exact-match rule takes no spread")

    @classmethod
    def exact_match(cls) -> "ConsensusRule":
        return cls(mode=ConsensusMode.EXACT_MATCH)

    @classmethod
    def max_spread(cls, spread: PointsLike) -> "ConsensusRule":
        return cls(mode=ConsensusMode.MAX_SPREAD, spread=as_points(spread))

    def satisfied_by(self, points: Sequence[Fraction]) -> bool:
        if not points:
            raise ValidationError("cannot evaluate consensus over zero estimates")
        if self.mode is ConsensusMode.EXACT_MATCH:
            return len(set(points)) == 1
        assert self.spread is not None
        return max(points) - min(points) <= self.spread


def snap_to_deck(value: PointsLike, deck: Deck) -> Fraction:
    """Map a free-form non-negative number onto the nearest deck value.

    Distance ties break toward the smaller card; values already in the deck
    map to themselves.
    """
    target = as_points(value)
    return min(deck.values, key=lambda card: (abs(card - target), card))


def check_consensus(
    estimates: Sequence[Estimate],
    rule: ConsensusRule,
    expected_estimators: Optional[Collection[str]] = None,
) -> bool:
    """Evaluate one revealed round against the session's consensus rule.

    All estimates must belong to the same round, one per participant. When
    `expected_estimators` is given, a missing estimator raises
    IncompleteRoundError instead of silently judging a partial round.
    """
    if not estimates:
        if expected_estimators:
            raise IncompleteRoundError(expected_estimators)
        raise ValidationError("no estimates to check")
    rounds = {e.round_index for e in estimates}
    if len(rounds) != 1:
        raise ValidationError(f"estimates span multiple rounds: {sorted(rounds)}")
    submitted = [e.participant_id for e in estimates]
    if len(set(submitted)) != len(submitted):
        raise ValidationError("multiple estimates for one participant in one round")
    if expected_estimators is not None:
        missing = set(expected_estimators) - set(submitted)
        if missing:
            raise IncompleteRoundError(missing)
    return rule.satisfied_by([e.points for e in estimates])


def fallback_aggregate(estimates: Sequence[Estimate], deck: Deck) -> Fraction:
    """Deck-snapped median, used when the round limit passes without consensus.

    Even-count medians average the two central values before snapping, so the
    result can land between submitted cards but is always a deck member.
    """
    if not estimates:
        raise ValidationError("cannot aggregate zero estimates")
    median = statistics.median(sorted(e.points for e in estimates))
    return snap_to_deck(median, deck)
