"""Session hosting: one engine, many connections.

A SessionHost owns a Session plus the connection registry. Every command
path (dispatch, connect, heartbeat tick) serializes on one host lock, so
event broadcast order equals log order on every connection. Outbound
frames go through bounded per-connection queues; a queue that fills marks
its connection dead rather than stalling the session.

Engine event listeners must not issue commands, so connection cleanup that
wants to emit a `left` event happens outside the broadcast path: either in
the transport's disconnect handling or on a heartbeat tick.
"""

from __future__ import annotations

import queue
import secrets
import threading
import time
import uuid
from typing import Callable, Dict, List, Optional, Tuple

from ..core import DomainError, UserStory, ValidationError
from ..events import SessionEvent, participant_payload
from ..points import format_points
from ..session import Session, SessionConfig
from .protocol import (
    CLOSE_HEARTBEAT,
    CLOSE_NORMAL,
    CLOSE_OVERFLOW,
    CLOSE_UNAUTHORIZED,
    ProtocolError,
    WireMessage,
    ack_frame,
    check_client_frame,
    control_frame,
    error_frame,
    event_frame,
)

DEFAULT_BUFFER_LIMIT = 1000
DEFAULT_HEARTBEAT_INTERVAL = 15.0
#: Pings a connection may leave unanswered before it is declared dead.
MISSED_PONG_LIMIT = 2


class AuthError(Exception):
    """Join token rejected; close with CLOSE_UNAUTHORIZED."""

    close_code = CLOSE_UNAUTHORIZED


class Connection:
    """One client connection and its outbound frame queue.

    Queue items are ("frame", text) or a terminal ("close", code, reason);
    after a close sentinel nothing more is enqueued. The queue is unbounded
    at the structure level; `buffer_limit` is enforced on enqueue so the
    close sentinel always fits.
    """

    def __init__(self, participant_id: str, buffer_limit: int, last_pong: float):
        self.id = uuid.uuid4().hex[:12]
        self.participant_id = participant_id
        self.buffer_limit = buffer_limit
        self.last_pong = last_pong
        self.unanswered_pings = 0
        self.alive = True
        self.outbound: "queue.Queue[Tuple]" = queue.Queue()

    def send_frame(self, message: WireMessage) -> None:
        if not self.alive:
            return
        if self.outbound.qsize() >= self.buffer_limit:
            self.close(CLOSE_OVERFLOW, "outbound buffer overflow")
            return
        self.outbound.put(("frame", message.to_json()))

    def close(self, code: int, reason: str) -> None:
        if not self.alive:
            return
        self.alive = False
        self.outbound.put(("close", code, reason))

    def next_item(self, timeout: Optional[float] = None) -> Tuple:
        """Blocking read for sender loops; raises queue.Empty on timeout."""
        return self.outbound.get(timeout=timeout)

    def drain(self) -> None:
        while True:
            try:
                self.outbound.get_nowait()
            except queue.Empty:
                return


class SessionHost:
    """A hosted session: engine, tokens, connections, heartbeat.

    Identity is bound by session-scoped join tokens generated at creation;
    clients never choose their own sender id. Post-command hooks (the auto
    facilitator) run under the host lock after every state change, so their
    follow-up commands land atomically in the same serialization order.
    """

    def __init__(
        self,
        session_id: str,
        config: SessionConfig,
        past_stories: Tuple[Tuple[str, str], ...] = (),
        buffer_limit: int = DEFAULT_BUFFER_LIMIT,
        heartbeat_interval: float = DEFAULT_HEARTBEAT_INTERVAL,
        clock: Callable[[], float] = time.monotonic,
    ):
        if buffer_limit < 1:
            raise ValidationError("buffer_limit must be >= 1")
        if heartbeat_interval <= 0:
            raise ValidationError("heartbeat_interval must be positive")
        self.session_id = session_id
        self.engine = Session(config)
        self.past_stories = tuple(past_stories)
        self.buffer_limit = buffer_limit
        self.heartbeat_interval = heartbeat_interval
        self._clock = clock
        self._lock = threading.RLock()
        self._connections: Dict[str, Connection] = {}
        self._hooks: List[Callable[[], None]] = []
        self.tokens: Dict[str, str] = {
            p.id: secrets.token_urlsafe(16) for p in config.participants
        }
        self._token_to_pid = {token: pid for pid, token in self.tokens.items()}
        self._unsubscribe = self.engine.subscribe(self._broadcast)

    # ---------------------------------------------------------- plumbing

    def add_post_command_hook(self, hook: Callable[[], None]) -> None:
        """`hook` runs under the host lock after every join/command; it may
        issue engine commands but must not block."""
        with self._lock:
            self._hooks.append(hook)
            hook()

    def _run_hooks(self) -> None:
        for hook in list(self._hooks):
            hook()

    def _broadcast(self, event: SessionEvent) -> None:
        # listener callback: runs inside the engine command, which every
        # path enters while holding our lock, so the registry is stable
        for conn in list(self._connections.values()):
            conn.send_frame(event_frame(self.session_id, event, conn.participant_id))

    # ------------------------------------------------------- connections

    def connect(self, token: str, last_seen: int = 0) -> Connection:
        """Authenticate, join if needed, and hand back a connection whose
        queue already holds the welcome frame plus every event after
        `last_seen`. Holding the lock across join, backlog, and
        registration is what makes the stream gapless."""
        self._check_last_seen(last_seen)
        with self._lock:
            participant_id = self._token_to_pid.get(token)
            if participant_id is None:
                raise AuthError("invalid session token")
            conn = Connection(participant_id, self.buffer_limit, self._clock())
            if participant_id not in self.engine.present_ids():
                self.engine.join(participant_id)
            conn.send_frame(
                control_frame(
                    "welcome",
                    self.session_id,
                    self.engine.last_sequence,
                    self._welcome_payload(participant_id),
                )
            )
            for event in self.engine.events():
                if event.sequence > last_seen:
                    conn.send_frame(event_frame(self.session_id, event, participant_id))
            self._connections[conn.id] = conn
            self._run_hooks()
            return conn

    def _welcome_payload(self, participant_id: str) -> dict:
        config = self.engine.config
        rule = config.consensus_rule
        return {
            "session_id": self.session_id,
            "participant": participant_payload(self.engine.participant(participant_id)),
            "roster": [participant_payload(p) for p in self.engine.participants()],
            "present": sorted(self.engine.present_ids()),
            "deck": [format_points(v) for v in config.deck.values],
            "max_rounds": config.max_rounds,
            "consensus_rule": {
                "mode": rule.mode.value,
                "spread": None if rule.spread is None else format_points(rule.spread),
            },
            "heartbeat_interval_seconds": self.heartbeat_interval,
            "past_stories": [
                {"title": title, "points": points} for title, points in self.past_stories
            ],
            "last_sequence": self.engine.last_sequence,
        }

    def disconnect(self, conn: Connection, leave: bool = True) -> None:
        """Transport-level departure: forget the connection and, when it was
        the participant's last one, emit the engine-level left event."""
        with self._lock:
            self._connections.pop(conn.id, None)
            conn.close(CLOSE_NORMAL, "disconnected")
            if leave:
                self._leave_if_last(conn.participant_id)
                self._run_hooks()

    def _leave_if_last(self, participant_id: str) -> None:
        for other in self._connections.values():
            if other.participant_id == participant_id and other.alive:
                return
        if participant_id in self.engine.present_ids():
            self.engine.leave(participant_id)

    def close_all(self, code: int = CLOSE_NORMAL, reason: str = "server shutdown") -> None:
        with self._lock:
            for conn in list(self._connections.values()):
                conn.close(code, reason)
            self._connections.clear()

    # --------------------------------------------------------- heartbeat

    def tick(self, now: Optional[float] = None) -> None:
        """One heartbeat pass; call every `heartbeat_interval` seconds.
        Sends a ping to every live connection and expires those that have
        left MISSED_PONG_LIMIT pings unanswered. `now` is injectable so
        tests can drive a virtual clock."""
        if now is None:
            now = self._clock()
        with self._lock:
            for conn in list(self._connections.values()):
                if not conn.alive:
                    self._connections.pop(conn.id, None)
                    self._leave_if_last(conn.participant_id)
                    continue
                if conn.unanswered_pings >= MISSED_PONG_LIMIT:
                    self._connections.pop(conn.id, None)
                    conn.close(CLOSE_HEARTBEAT, "heartbeat lost")
                    self._leave_if_last(conn.participant_id)
                    continue
                conn.send_frame(
                    control_frame(
                        "ping",
                        self.session_id,
                        self.engine.last_sequence,
                        {"at": now},
                    )
                )
                conn.unanswered_pings += 1
            self._run_hooks()

    def pong(self, conn: Connection) -> None:
        with self._lock:
            conn.unanswered_pings = 0
            conn.last_pong = self._clock()

    # ------------------------------------------------------------ resync

    def _check_last_seen(self, last_seen: object) -> int:
        if not isinstance(last_seen, int) or isinstance(last_seen, bool) or last_seen < 0:
            raise ProtocolError("last_seen must be a non-negative integer")
        return last_seen

    def resync(self, conn: Connection, last_seen: int) -> None:
        """Reset the connection's delivery cursor: drop anything queued but
        unsent, then replay every event after `last_seen`. Live delivery
        resumes seamlessly because nothing can be emitted while we hold the
        lock."""
        self._check_last_seen(last_seen)
        with self._lock:
            if last_seen > self.engine.last_sequence:
                raise ValidationError(
                    f"last_seen {last_seen} is beyond this session's log "
                    f"(at {self.engine.last_sequence}); wrong session?"
                )
            conn.drain()
            for event in self.engine.events():
                if event.sequence > last_seen:
                    conn.send_frame(event_frame(self.session_id, event, conn.participant_id))

    # ---------------------------------------------------------- dispatch

    def dispatch(self, conn: Connection, msg: WireMessage) -> None:
        """Route one client frame. Engine rejections come back as error
        frames on the same connection; protocol violations raise for the
        transport to close on. Acks echo the command_id when given."""
        check_client_frame(msg)
        if msg.session_id is not None and msg.session_id != self.session_id:
            raise ProtocolError(
                f"frame addressed to session {msg.session_id!r}, "
                f"this connection is joined to {self.session_id!r}"
            )
        if msg.type == "join":
            raise ProtocolError("connection already joined")
        if msg.type == "pong":
            self.pong(conn)
            return
        command_id = msg.payload.get("command_id")
        if command_id is not None and not isinstance(command_id, str):
            raise ProtocolError("command_id must be a string")
        with self._lock:
            try:
                self._execute(conn, msg)
            except ProtocolError:
                raise
            except DomainError as err:
                conn.send_frame(
                    error_frame(
                        self.session_id,
                        self.engine.last_sequence,
                        "rejected",
                        str(err),
                        command_id,
                    )
                )
                return
            conn.send_frame(
                ack_frame(self.session_id, self.engine.last_sequence, command_id)
            )
            if msg.type == "leave":
                conn.close(CLOSE_NORMAL, "left")
            self._run_hooks()

    def _execute(self, conn: Connection, msg: WireMessage) -> None:
        pid = conn.participant_id
        payload = msg.payload
        if msg.type == "resync":
            self.resync(conn, self._check_last_seen(payload.get("last_seen", 0)))
        elif msg.type == "chat":
            self.engine.post_chat(pid, _require_str(payload, "body"))
        elif msg.type == "submit_estimate":
            if "points" not in payload:
                raise ValidationError("submit_estimate requires points")
            self.engine.submit_estimate(pid, payload["points"])
        elif msg.type == "present_story":
            self.engine.present_story(pid, _story_from_payload(payload))
        elif msg.type == "start_next_round":
            self.engine.start_next_round(pid)
        elif msg.type == "force_reveal":
            self.engine.force_reveal(pid)
        elif msg.type == "mark_absent":
            self.engine.mark_absent(pid, _require_str(payload, "participant_id"))
        elif msg.type == "leave":
            if pid in self.engine.present_ids():
                self.engine.leave(pid)
            self._connections.pop(conn.id, None)
        else:  # pragma: no cover - check_client_frame bounds the set
            raise ProtocolError(f"unroutable frame type {msg.type!r}")

    # ------------------------------------------------------------- admin

    def iter_log_lines(self) -> List[str]:
        """The unredacted event log, one canonical JSON line per event.
        Contains hidden estimate values; serve only to the session admin."""
        return [event.to_json() for event in self.engine.events()]


def _require_str(payload: dict, key: str) -> str:
    value = payload.get(key)
    if not isinstance(value, str):
        raise ValidationError(f"payload field {key!r} must be a string")
    return value


def _story_from_payload(payload: dict) -> Optional[UserStory]:
    raw = payload.get("story")
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ValidationError("story must be an object")
    unknown = set(raw) - {"id", "title", "description"}
    if unknown:
        raise ValidationError(f"unknown story fields: {', '.join(sorted(unknown))}")
    return UserStory(
        id=str(raw.get("id", "")),
        title=str(raw.get("title", "")),
        description=raw.get("description"),
    )
