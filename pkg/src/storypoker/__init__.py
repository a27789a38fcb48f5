"""storypoker: collaborative planning-poker estimation with LLM-backed agents,
plus an offline benchmarking harness for story-point estimators."""

from .core import (
    DEFAULT_DECK,
    ConsensusMode,
    ConsensusRule,
    Deck,
    DomainError,
    Estimate,
    IncompleteRoundError,
    NotPermittedError,
    Participant,
    ParticipantKind,
    UserStory,
    ValidationError,
    check_consensus,
    fallback_aggregate,
    snap_to_deck,
)
from .events import (
    EventKind,
    EventLogWriter,
    ReplayError,
    SessionEvent,
    canonical_json,
    read_event_log,
)
from .points import PointsError, as_points, format_points, parse_points
from .session import (
    ChatMessage,
    ConfigValidationError,
    RoundPhase,
    RoundState,
    Session,
    SessionConfig,
    StoryResult,
    create_session,
    replay,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_DECK",
    "ChatMessage",
    "ConfigValidationError",
    "ConsensusMode",
    "ConsensusRule",
    "Deck",
    "DomainError",
    "Estimate",
    "EventKind",
    "EventLogWriter",
    "IncompleteRoundError",
    "NotPermittedError",
    "Participant",
    "ParticipantKind",
    "PointsError",
    "ReplayError",
    "RoundPhase",
    "RoundState",
    "Session",
    "SessionConfig",
    "SessionEvent",
    "StoryResult",
    "UserStory",
    "ValidationError",
    "as_points",
    "canonical_json",
    "check_consensus",
    "create_session",
    "fallback_aggregate",
    "format_points",
    "parse_points",
    "read_event_log",
    "replay",
    "snap_to_deck",
    "__version__",
]
