"""Agents as wire clients.

Each AgentClient runs one Agent on its own thread, connected to a
SessionHost through the same dispatch path and frame schema a WebSocket
client uses, so agents exercise the exact participant-facing protocol:
they see redacted estimate_submitted frames and learn values only from
round_revealed, and every action they take is a client command frame.

The thread is the agent's event loop: frames come off the connection
queue, events feed short-term memory, and two cues trigger a turn - a
round_started naming the agent, and a facilitator chat arriving after a
reveal (the discussion prompt). Command acks are awaited by pumping the
same queue, so ordering is preserved without a second thread.
"""

from __future__ import annotations

import logging
import threading
import uuid
from queue import Empty
from typing import List, Optional, Tuple

from ..agents import Agent, AgentUnavailableError
from ..core import Deck, ValidationError
from ..events import EventKind, SessionEvent
from ..points import as_points, format_points
from ..session import RoundPhase
from .hub import Connection, SessionHost
from .protocol import (
    EVENT_TYPES,
    ProtocolError,
    WireMessage,
    client_frame,
    parse_frame,
)

logger = logging.getLogger(__name__)

#: How long a command may wait for its ack before the client gives up.
ACK_TIMEOUT_SECONDS = 30.0


class _WireSessionFacade:
    """The `session` object Agent.execute_action drives, backed by command
    frames instead of direct engine calls. Rejections surface as
    ValidationError so the agent records them as observations."""

    def __init__(self, client: "AgentClient"):
        self._client = client

    def submit_estimate(self, participant_id: str, points) -> None:
        self._client.command(
            "submit_estimate", {"points": format_points(as_points(points))}
        )

    def post_chat(self, sender_id: str, body: str) -> None:
        self._client.command("chat", {"body": body})


class AgentClient:
    def __init__(self, agent: Agent, host: SessionHost, token: str):
        self.agent = agent
        self.host = host
        self.token = token
        self.participant_id: Optional[str] = None
        self.facilitator_id: Optional[str] = None
        self._conn: Optional[Connection] = None
        self._session = _WireSessionFacade(self)
        self._thread: Optional[threading.Thread] = None
        self._pending_turns: List[RoundPhase] = []
        self._in_turn = False
        self.failures: List[str] = []

    # ----------------------------------------------------------- control

    def start(self) -> "AgentClient":
        self._conn = self.host.connect(self.token, last_seen=0)
        self._thread = threading.Thread(
            target=self._run, name="agent-client", daemon=True
        )
        self._thread.start()
        return self

    def stop(self, timeout: float = 10.0) -> None:
        if self._conn is not None and self._conn.alive:
            try:
                self.host.dispatch(self._conn, client_frame("leave"))
            except ProtocolError:
                self._conn.close(1000, "stopped")
        if self._thread is not None:
            self._thread.join(timeout)

    def join(self, timeout: float = 60.0) -> None:
        """Wait for the agent thread to finish (connection closed)."""
        if self._thread is not None:
            self._thread.join(timeout)
            if self._thread.is_alive():
                raise TimeoutError("agent client still running")

    # -------------------------------------------------------------- loop

    def _run(self) -> None:
        try:
            while True:
                try:
                    item = self._conn.next_item(timeout=ACK_TIMEOUT_SECONDS)
                except Empty:
                    continue
                if item[0] == "close":
                    return
                self._handle_frame(parse_frame(item[1]))
                self._flush_turns()
        except Exception:  # pragma: no cover - defensive; surfaced via failures
            logger.exception("agent client %s crashed", self.participant_id)
            self.failures.append("agent client crashed")

    def _handle_frame(self, msg: WireMessage) -> None:
        if msg.type == "welcome":
            self._apply_welcome(msg.payload)
        elif msg.type == "ping":
            self.host.dispatch(self._conn, client_frame("pong"))
        elif msg.type in EVENT_TYPES:
            self._apply_event(msg)
        # stray acks/errors outside a command pump carry nothing to do

    def _apply_welcome(self, payload: dict) -> None:
        self.participant_id = payload["participant"]["id"]
        for member in payload["roster"]:
            if member["kind"] == "facilitator":
                self.facilitator_id = member["id"]
        self.agent.attach(
            session_id=payload["session_id"],
            participant_id=self.participant_id,
            deck=Deck(tuple(payload["deck"])),
        )

    def _apply_event(self, msg: WireMessage) -> None:
        event = SessionEvent(
            sequence=msg.sequence, kind=EventKind(msg.type), payload=msg.payload
        )
        if not self.agent.on_event(event, session_id=msg.session_id):
            return
        if event.kind is EventKind.ROUND_STARTED:
            if self.participant_id in event.payload.get("required", []):
                self._pending_turns.append(RoundPhase.ESTIMATING)
        elif event.kind is EventKind.CHAT:
            if (
                msg.sender_id == self.facilitator_id
                and self._round_is_revealed()
            ):
                self._pending_turns.append(RoundPhase.DISCUSSING)

    def _round_is_revealed(self) -> bool:
        memory = self.agent.memory
        if memory.story is None or memory.current_round < 1:
            return False
        rnd = memory.current_round
        return rnd in memory.peer_estimates_by_round or rnd in memory.own_estimates

    def _flush_turns(self) -> None:
        while self._pending_turns and not self._in_turn:
            phase = self._pending_turns.pop(0)
            if not self._turn_still_due(phase):
                continue
            self._in_turn = True
            try:
                self.agent.decide(self._session, phase)
            except AgentUnavailableError as err:
                logger.warning(
                    "agent %s unavailable: %s", self.participant_id, err
                )
                self.failures.append(str(err))
            finally:
                self._in_turn = False

    def _turn_still_due(self, phase: RoundPhase) -> bool:
        """Cues can go stale while a turn runs (an auto-reveal may finalize
        the story); re-check against memory before acting."""
        memory = self.agent.memory
        if memory.story is None or memory.current_round < 1:
            return False
        if phase is RoundPhase.ESTIMATING:
            submitted = memory.submitted_by_round.get(memory.current_round, set())
            return (
                not self._round_is_revealed()
                and self.participant_id not in submitted
            )
        return self._round_is_revealed()

    # ---------------------------------------------------------- commands

    def command(self, type: str, payload: dict) -> None:
        """Send one command frame and pump the queue until its ack comes
        back; event frames read along the way still feed memory, but turn
        cues defer until the current turn finishes."""
        command_id = uuid.uuid4().hex
        frame = client_frame(type, dict(payload, command_id=command_id))
        self.host.dispatch(self._conn, frame)
        deadline_attempts = int(ACK_TIMEOUT_SECONDS * 10)
        for _ in range(deadline_attempts):
            try:
                item = self._conn.next_item(timeout=0.1)
            except Empty:
                continue
            if item[0] == "close":
                raise ValidationError("connection closed while awaiting ack")
            msg = parse_frame(item[1])
            got = msg.payload.get("command_id")
            if msg.type == "ack" and got == command_id:
                return
            if msg.type == "error" and got == command_id:
                raise ValidationError(msg.payload.get("message", "rejected"))
            self._handle_frame(msg)
        raise ValidationError(f"no ack for {type} within {ACK_TIMEOUT_SECONDS}s")
