"""Session hosting over WebSocket: wire protocol, hub, HTTP service,
agent wire clients, and the auto facilitator."""

from .agentclient import AgentClient
from .facilitator import DISCUSSION_PROMPT, AutoFacilitator, auto_facilitate
from .hub import (
    DEFAULT_BUFFER_LIMIT,
    DEFAULT_HEARTBEAT_INTERVAL,
    MISSED_PONG_LIMIT,
    AuthError,
    Connection,
    SessionHost,
)
from .protocol import (
    CLIENT_TYPES,
    CLOSE_HEARTBEAT,
    CLOSE_NORMAL,
    CLOSE_OVERFLOW,
    CLOSE_PROTOCOL,
    CLOSE_UNAUTHORIZED,
    EVENT_TYPES,
    SERVER_TYPES,
    WIRE_VERSION,
    ProtocolError,
    WireMessage,
    ack_frame,
    check_client_frame,
    client_frame,
    control_frame,
    error_frame,
    event_frame,
    parse_frame,
    redacted_event_payload,
)
from .service import SessionStore, build_host, create_app, start_heartbeat

__all__ = [
    "AgentClient",
    "AutoFacilitator",
    "AuthError",
    "CLIENT_TYPES",
    "CLOSE_HEARTBEAT",
    "CLOSE_NORMAL",
    "CLOSE_OVERFLOW",
    "CLOSE_PROTOCOL",
    "CLOSE_UNAUTHORIZED",
    "Connection",
    "DEFAULT_BUFFER_LIMIT",
    "DEFAULT_HEARTBEAT_INTERVAL",
    "DISCUSSION_PROMPT",
    "EVENT_TYPES",
    "MISSED_PONG_LIMIT",
    "ProtocolError",
    "SERVER_TYPES",
    "SessionHost",
    "SessionStore",
    "WIRE_VERSION",
    "WireMessage",
    "ack_frame",
    "auto_facilitate",
    "build_host",
    "check_client_frame",
    "client_frame",
    "control_frame",
    "create_app",
    "error_frame",
    "event_frame",
    "parse_frame",
    "redacted_event_payload",
]
