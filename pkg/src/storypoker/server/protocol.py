"""The WebSocket wire protocol: frame schema, type catalogue, redaction.

Humans and agents speak the same protocol. Every frame is one JSON text
message with a schema version; the server stamps identity and sequence
numbers, clients never do. The one visibility rule lives here too: an
estimate_submitted event loses its value for everyone but the submitter,
so an unrevealed estimate can never cross a non-owner's connection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from ..events import EventKind, SessionEvent, canonical_json

WIRE_VERSION = 1

# Client commands. `join` must be the first frame on a connection; `pong`
# answers server pings; the rest map onto session engine commands.
CLIENT_TYPES = frozenset(
    {
        "join",
        "resync",
        "present_story",
        "submit_estimate",
        "chat",
        "start_next_round",
        "force_reveal",
        "mark_absent",
        "leave",
        "pong",
    }
)

# Server control frames; session events go out under their EventKind value.
CONTROL_TYPES = frozenset({"welcome", "ack", "error", "ping"})
EVENT_TYPES = frozenset(kind.value for kind in EventKind)
SERVER_TYPES = CONTROL_TYPES | EVENT_TYPES

#: Application close codes (RFC 6455 private range).
CLOSE_NORMAL = 1000
CLOSE_PROTOCOL = 4400
CLOSE_UNAUTHORIZED = 4401
CLOSE_OVERFLOW = 4408
CLOSE_HEARTBEAT = 4409

SERVER_SENDER = "server"

# Which payload key names the acting participant, per event kind. Events
# without one (reveals, round bookkeeping) are attributed to the server.
_ACTOR_KEYS = {
    EventKind.LEFT: "participant_id",
    EventKind.CHAT: "sender_id",
    EventKind.ESTIMATE_SUBMITTED: "participant_id",
}


class ProtocolError(Exception):
    """A frame violated the wire contract. The connection that sent it is
    closed with `close_code` after one final error frame."""

    def __init__(self, message: str, close_code: int = CLOSE_PROTOCOL):
        super().__init__(message)
        self.close_code = close_code


@dataclass(frozen=True)
class WireMessage:
    """One frame. Server frames always carry session_id and sequence;
    client frames carry neither sender_id nor sequence (both are
    server-stamped)."""

    type: str
    payload: dict = field(default_factory=dict)
    session_id: Optional[str] = None
    sender_id: Optional[str] = None
    sequence: Optional[int] = None
    v: int = WIRE_VERSION

    def __post_init__(self) -> None:
        if not self.type or not isinstance(self.type, str):
            raise ProtocolError("frame type must be a nonempty string")
        if not isinstance(self.payload, dict):
            raise ProtocolError("frame payload must be an object")
        if self.sequence is not None and (
            not isinstance(self.sequence, int)
            or isinstance(self.sequence, bool)
            or self.sequence < 0
        ):
            raise ProtocolError("frame sequence must be a non-negative integer")

    def to_json(self) -> str:
        record: dict = {"v": self.v, "type": self.type, "payload": self.payload}
        if self.session_id is not None:
            record["session_id"] = self.session_id
        if self.sender_id is not None:
            record["sender_id"] = self.sender_id
        if self.sequence is not None:
            record["sequence"] = self.sequence
        return canonical_json(record)


def parse_frame(text: str) -> WireMessage:
    """Decode one inbound frame, rejecting anything off-schema."""
    try:
        record = json.loads(text)
    except json.JSONDecodeError as err:
        raise ProtocolError(f"frame is not valid JSON: {err}") from None
    if not isinstance(record, dict):
        raise ProtocolError("frame must be a JSON object")
    version = record.get("v")
    if version != WIRE_VERSION:
        raise ProtocolError(f"unsupported wire version {version!r}")
    unknown = set(record) - {"v", "type", "payload", "session_id", "sender_id", "sequence"}
    if unknown:
        raise ProtocolError(f"unknown frame fields: {', '.join(sorted(unknown))}")
    return WireMessage(
        type=record.get("type", ""),
        payload=record.get("payload", {}),
        session_id=record.get("session_id"),
        sender_id=record.get("sender_id"),
        sequence=record.get("sequence"),
        v=version,
    )


def check_client_frame(msg: WireMessage) -> WireMessage:
    """Enforce the client-side invariants before dispatch."""
    if msg.type not in CLIENT_TYPES:
        raise ProtocolError(f"unknown client frame type {msg.type!r}")
    if msg.sequence is not None:
        raise ProtocolError("client frames must not carry a sequence number")
    return msg


def redacted_event_payload(event: SessionEvent, viewer_id: Optional[str]) -> dict:
    """The event payload as `viewer_id` may see it.

    estimate_submitted keeps its value only for the submitter; everyone
    else learns who submitted, never what. Values become public solely
    through round_revealed.
    """
    if event.kind is EventKind.ESTIMATE_SUBMITTED:
        payload = dict(event.payload)
        if viewer_id != payload.get("participant_id"):
            payload.pop("points", None)
        return payload
    return dict(event.payload)


def _event_sender(event: SessionEvent) -> str:
    if event.kind is EventKind.JOINED:
        return event.payload["participant"]["id"]
    key = _ACTOR_KEYS.get(event.kind)
    if key is not None:
        return event.payload[key]
    return SERVER_SENDER


def event_frame(session_id: str, event: SessionEvent, viewer_id: Optional[str]) -> WireMessage:
    return WireMessage(
        type=event.kind.value,
        payload=redacted_event_payload(event, viewer_id),
        session_id=session_id,
        sender_id=_event_sender(event),
        sequence=event.sequence,
    )


def control_frame(type: str, session_id: str, last_sequence: int, payload: dict) -> WireMessage:
    """Server control frame, stamped with the session's latest sequence so
    every server frame is orderable against the event stream."""
    return WireMessage(
        type=type,
        payload=payload,
        session_id=session_id,
        sender_id=SERVER_SENDER,
        sequence=last_sequence,
    )


def ack_frame(session_id: str, last_sequence: int, command_id: Optional[str]) -> WireMessage:
    payload = {"status": "ok"}
    if command_id is not None:
        payload["command_id"] = command_id
    return control_frame("ack", session_id, last_sequence, payload)


def error_frame(
    session_id: str,
    last_sequence: int,
    code: str,
    message: str,
    command_id: Optional[str] = None,
) -> WireMessage:
    payload = {"code": code, "message": message}
    if command_id is not None:
        payload["command_id"] = command_id
    return control_frame("error", session_id, last_sequence, payload)


def client_frame(type: str, payload: Optional[dict] = None, session_id: Optional[str] = None) -> WireMessage:
    """Constructor for outbound client frames (used by the agent runtime
    and by tests; browsers build the same shape by hand)."""
    return check_client_frame(
        WireMessage(type=type, payload=payload or {}, session_id=session_id)
    )
