"""HTTP/WebSocket surface: FastAPI app over a SessionStore.

One process hosts many sessions. A facilitator creates a session with
POST /sessions and receives one join token per participant; those tokens
are the only credentials and appear solely in that response, never in any
log line. Clients then upgrade at /ws and speak the wire protocol.
"""

from __future__ import annotations

import threading
import time
import uuid
from typing import Dict, List, Optional, Tuple

import anyio
from fastapi import FastAPI
from starlette.responses import JSONResponse, PlainTextResponse
from starlette.websockets import WebSocket, WebSocketDisconnect

from ..core import ConsensusRule, Deck, Participant, UserStory, ValidationError
from ..points import PointsError, as_points, format_points
from ..session import ConfigValidationError, SessionConfig
from .facilitator import auto_facilitate
from .hub import (
    DEFAULT_BUFFER_LIMIT,
    DEFAULT_HEARTBEAT_INTERVAL,
    AuthError,
    Connection,
    SessionHost,
)
from .protocol import (
    CLOSE_PROTOCOL,
    CLOSE_UNAUTHORIZED,
    ProtocolError,
    check_client_frame,
    error_frame,
    parse_frame,
)


def _participant_from_doc(record: object, index: int) -> Participant:
    if not isinstance(record, dict):
        raise ValidationError(f"participants[{index}] must be an object")
    try:
        return Participant(
            id=str(record.get("id", "")),
            display_name=str(record.get("display_name", "")),
            kind=record.get("kind", "human"),
            role_label=record.get("role_label"),
        )
    except ValueError as err:
        raise ValidationError(f"participants[{index}]: {err}") from err


def _story_from_doc(record: object, index: int) -> UserStory:
    if not isinstance(record, dict):
        raise ValidationError(f"stories[{index}] must be an object")
    return UserStory(
        id=str(record.get("id", "")),
        title=str(record.get("title", "")),
        description=record.get("description"),
    )


def _consensus_rule_from_doc(record: object) -> ConsensusRule:
    if record is None:
        return ConsensusRule.exact_match()
    if not isinstance(record, dict):
        raise ValidationError("consensus_rule must be an object")
    mode = record.get("mode", "exact-match")
    if mode == "exact-match":
        return ConsensusRule.exact_match()
    if mode == "max-spread":
        if "spread" not in record:
            raise ValidationError("max-spread rule requires a spread")
        return ConsensusRule.max_spread(record["spread"])
    raise ValidationError(f"unknown consensus mode {mode!r}")


def _past_stories_from_doc(record: object) -> Tuple[Tuple[str, str], ...]:
    if record is None:
        return ()
    if not isinstance(record, list):
        raise ValidationError("past_stories must be a list")
    out = []
    for i, item in enumerate(record):
        if not isinstance(item, dict) or "title" not in item or "points" not in item:
            raise ValidationError(f"past_stories[{i}] needs title and points")
        out.append((str(item["title"]), format_points(as_points(item["points"]))))
    return tuple(out)


def build_host(doc: dict, clock=time.monotonic) -> SessionHost:
    """Build a SessionHost from a session config document (the POST
    /sessions body, also the `session` block of the server config file)."""
    if not isinstance(doc, dict):
        raise ValidationError("session config must be an object")
    known = {
        "session_id",
        "participants",
        "stories",
        "deck",
        "consensus_rule",
        "max_rounds",
        "past_stories",
        "auto_facilitate",
        "buffer_limit",
        "heartbeat_interval_seconds",
    }
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"unknown session config keys: {', '.join(sorted(unknown))}")
    raw_participants = doc.get("participants")
    if not isinstance(raw_participants, list) or not raw_participants:
        raise ValidationError("participants must be a nonempty list")
    participants = tuple(
        _participant_from_doc(p, i) for i, p in enumerate(raw_participants)
    )
    raw_stories = doc.get("stories", [])
    if not isinstance(raw_stories, list):
        raise ValidationError("stories must be a list")
    stories = tuple(_story_from_doc(s, i) for i, s in enumerate(raw_stories))
    try:
        kwargs = {}
        if doc.get("deck") is not None:
            if not isinstance(doc["deck"], list):
                raise ValidationError("deck must be a list of point values")
            kwargs["deck"] = Deck(tuple(doc["deck"]))
        if doc.get("max_rounds") is not None:
            kwargs["max_rounds"] = doc["max_rounds"]
        config = SessionConfig(
            participants=participants,
            story_queue=stories,
            consensus_rule=_consensus_rule_from_doc(doc.get("consensus_rule")),
            **kwargs,
        )
    except PointsError as err:
        raise ValidationError(str(err)) from err
    host = SessionHost(
        session_id=str(doc.get("session_id") or uuid.uuid4().hex[:12]),
        config=config,
        past_stories=_past_stories_from_doc(doc.get("past_stories")),
        buffer_limit=doc.get("buffer_limit", DEFAULT_BUFFER_LIMIT),
        heartbeat_interval=doc.get("heartbeat_interval_seconds", DEFAULT_HEARTBEAT_INTERVAL),
        clock=clock,
    )
    if doc.get("auto_facilitate"):
        auto_facilitate(host)
    return host


class SessionStore:
    """The sessions this process hosts, keyed by session id."""

    def __init__(self):
        self._lock = threading.Lock()
        self._hosts: Dict[str, SessionHost] = {}

    def add(self, host: SessionHost) -> SessionHost:
        with self._lock:
            if host.session_id in self._hosts:
                raise ValidationError(f"session {host.session_id!r} already exists")
            self._hosts[host.session_id] = host
            return host

    def create(self, doc: dict) -> SessionHost:
        return self.add(build_host(doc))

    def get(self, session_id: str) -> Optional[SessionHost]:
        with self._lock:
            return self._hosts.get(session_id)

    def hosts(self) -> List[SessionHost]:
        with self._lock:
            return list(self._hosts.values())

    def tick_all(self, now: Optional[float] = None) -> None:
        for host in self.hosts():
            host.tick(now)


def start_heartbeat(store: SessionStore, interval: float) -> threading.Event:
    """Background ticking for production use; tests drive host.tick
    directly with a virtual clock. Returns the stop event."""
    stop = threading.Event()

    def loop() -> None:
        while not stop.wait(interval):
            store.tick_all()

    threading.Thread(target=loop, name="storypoker-heartbeat", daemon=True).start()
    return stop


def create_app(store: Optional[SessionStore] = None) -> FastAPI:
    app = FastAPI(title="storypoker session server", docs_url=None, redoc_url=None)
    app.state.store = store if store is not None else SessionStore()

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "sessions": len(app.state.store.hosts())}

    @app.post("/sessions", status_code=201)
    def create_session(doc: dict) -> JSONResponse:
        try:
            host = app.state.store.create(doc)
        except (ValidationError, ConfigValidationError, PointsError) as err:
            return JSONResponse({"error": str(err)}, status_code=422)
        # the one place tokens ever leave the server
        return JSONResponse(
            {
                "session_id": host.session_id,
                "tokens": dict(host.tokens),
                "websocket": "/ws",
            },
            status_code=201,
        )

    @app.get("/sessions/{session_id}/log")
    def session_log(session_id: str) -> PlainTextResponse:
        host = app.state.store.get(session_id)
        if host is None:
            return PlainTextResponse("unknown session\n", status_code=404)
        lines = host.iter_log_lines()
        return PlainTextResponse(
            "".join(line + "\n" for line in lines),
            media_type="application/x-ndjson",
        )

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket) -> None:
        await websocket.accept()
        store: SessionStore = app.state.store
        try:
            host, conn = await _join_handshake(websocket, store)
        except (ProtocolError, AuthError) as err:
            code = getattr(err, "close_code", CLOSE_PROTOCOL)
            try:
                await websocket.send_text(
                    error_frame("", 0, "join_failed", str(err)).to_json()
                )
                await websocket.close(code=code, reason=str(err)[:100])
            except Exception:
                pass
            return
        except WebSocketDisconnect:
            return
        await _pump(websocket, host, conn)

    return app


async def _join_handshake(websocket: WebSocket, store: SessionStore):
    text = await websocket.receive_text()
    msg = check_client_frame(parse_frame(text))
    if msg.type != "join":
        raise ProtocolError(f"first frame must be join, got {msg.type!r}")
    payload = msg.payload
    session_id = payload.get("session_id") or msg.session_id
    if not isinstance(session_id, str) or not session_id:
        raise ProtocolError("join requires a session_id")
    host = store.get(session_id)
    if host is None:
        raise ProtocolError(f"unknown session {session_id!r}", CLOSE_UNAUTHORIZED)
    token = payload.get("token")
    if not isinstance(token, str):
        raise AuthError("join requires a token")
    last_seen = payload.get("last_seen", 0)
    conn = host.connect(token, last_seen)
    return host, conn


async def _pump(websocket: WebSocket, host: SessionHost, conn: Connection) -> None:
    """Reader in this task, sender in a sibling; the close sentinel is what
    lets the blocking queue read in the sender thread wind down."""

    async def sender() -> None:
        while True:
            item = await anyio.to_thread.run_sync(conn.outbound.get, abandon_on_cancel=True)
            try:
                if item[0] == "close":
                    await websocket.close(code=item[1], reason=item[2][:100])
                    return
                await websocket.send_text(item[1])
            except Exception:
                return

    try:
        async with anyio.create_task_group() as tg:
            tg.start_soon(sender)
            try:
                while True:
                    text = await websocket.receive_text()
                    try:
                        host.dispatch(conn, parse_frame(text))
                    except ProtocolError as err:
                        conn.send_frame(
                            error_frame(
                                host.session_id,
                                host.engine.last_sequence,
                                "protocol",
                                str(err),
                            )
                        )
                        conn.close(err.close_code, str(err))
                        break
                    if not conn.alive:
                        break
            except WebSocketDisconnect:
                pass
            finally:
                host.disconnect(conn)
    except Exception:
        host.disconnect(conn)
        raise
