"""The estimation agent: ReAct loop over a model binding, fed by session
events, acting through session commands.

One agent processes events and decide() turns strictly sequentially; its
whole state lives in its ShortTermMemory. Distinct agents share nothing and
may run concurrently.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from ..core import (
    Deck,
    DomainError,
    UserStory,
    ValidationError,
    snap_to_deck,
)
from ..events import SessionEvent
from ..gateway.bindings import ChatTurn, ScriptUnderrunError, TransportError, complete
from ..gateway.estimation import ESTIMATE_SENTINEL, EstimateParseError, parse_estimate_reply
from ..points import as_points, format_points
from ..session import RoundPhase
from .memory import ShortTermMemory
from .prompts import DEFAULT_ACTIONS_DESCRIPTION, DEFAULT_GAME_RULES, build_system_prompt
from .react import (
    ACTION_CHAT,
    ACTION_MAKE_ESTIMATION,
    ReactParseError,
    ReactStep,
    parse_react,
)
from .similarity import Example, select_examples

logger = logging.getLogger("storypoker.agents")

CORRECTIVE_PROMPT = (
    "Your last reply did not follow the required format. Reply with exactly:\n\n"
    "Thought: your reasoning about what to do next\n"
    "Action: the_action_name\n"
    'Action Input: {"param1": "value1", "param2": "value2"}\n\n'
    "where the action is one of: chat, make_estimation. "
    'For chat, Action Input needs a "message". '
    'For make_estimation, Action Input needs a numeric "points".'
)

NO_NEW_CONTEXT_NUDGE = (
    "Observation: no new discussion since your last message this round. "
    "Do not ask further questions; commit to an estimation now."
)


class AgentUnavailableError(Exception):
    """The agent's model could not be reached; the session should treat the
    agent as absent for this turn."""


@dataclass(frozen=True)
class AgentConfig:
    """Static agent parameters. The binding is the agent's long-term memory;
    sampling knobs live on the binding itself."""

    role_label: str
    binding: object
    example_count: int = 0
    max_react_steps: int = 5
    corpus: Tuple[Example, ...] = ()
    rules: str = DEFAULT_GAME_RULES
    actions_description: str = DEFAULT_ACTIONS_DESCRIPTION
    include_description: bool = True

    def __post_init__(self) -> None:
        if not self.role_label.strip():
            raise ValidationError("role_label must be nonempty")
        object.__setattr__(self, "role_label", self.role_label.strip())
        if self.example_count < 0:
            raise ValidationError("example_count must be >= 0")
        if self.max_react_steps < 1:
            raise ValidationError("max_react_steps must be >= 1")
        if not hasattr(self.binding, "complete"):
            raise ValidationError("binding must expose complete(turns)")
        object.__setattr__(self, "corpus", tuple(self.corpus))


class Agent:
    def __init__(self, config: AgentConfig):
        self.config = config
        self.memory = ShortTermMemory(role_label=config.role_label)
        self.deck: Optional[Deck] = None
        self._chat_watermark = 0

    # ------------------------------------------------------------- wiring

    def attach(self, session_id: str, participant_id: str, deck: Deck) -> None:
        """Bind to a session before any event is applied."""
        self.memory.bind(session_id, participant_id)
        self.deck = deck

    def on_event(self, event: SessionEvent, session_id: Optional[str] = None) -> bool:
        """Feed one session event into memory; duplicate sequences no-op.

        Example selection for the presented story happens here so that the
        system prompt is fully determined by memory state afterwards.
        """
        applied = self.memory.apply_event(event, session_id=session_id)
        if applied and self.memory.story is not None and event.payload.get("story"):
            self.memory.selected_examples = select_examples(
                self.memory.story, self.config.corpus, self.config.example_count
            )
        return applied

    # ------------------------------------------------------------ prompts

    def system_prompt(self) -> str:
        if self.memory.story is None:
            raise ValidationError("no story presented yet")
        return build_system_prompt(
            role_label=self.config.role_label,
            story=self.memory.story,
            examples=self.memory.selected_examples,
            rules=self.config.rules,
            actions_description=self.config.actions_description,
            include_description=self.config.include_description,
        )

    def build_round_context(self, round_index: int, phase: RoundPhase = RoundPhase.ESTIMATING) -> str:
        """The user message for one turn: roster and chat for round 1, plus
        prior-round estimates and discussion afterwards."""
        memory = self.memory
        if memory.story is None:
            raise ValidationError("no story presented yet")
        if round_index < 1 or round_index > memory.current_round:
            raise ValidationError(
                f"round {round_index} not known to memory (current is {memory.current_round})"
            )
        lines: List[str] = [f"Round {round_index}."]
        lines.append("")
        lines.append("## Participants")
        for pid, participant in memory.participants.items():
            if pid not in memory.present:
                continue
            lines.append(f"- {self._attribution(pid)}")
        # while estimating, the last revealed round is the previous one;
        # while discussing, it is this round's own reveal
        revealed = round_index if phase is RoundPhase.DISCUSSING else round_index - 1
        own = memory.own_estimates.get(revealed)
        peers = memory.peer_estimates_by_round.get(revealed, {})
        if revealed >= 1 and (own is not None or peers):
            lines.append("")
            lines.append(f"## Estimates from round {revealed}")
            if own is not None:
                lines.append(f"- You estimated: {format_points(own)}")
            for pid, points in peers.items():
                lines.append(f"- {self._attribution(pid)}: {format_points(points)}")
        if revealed >= 1 and revealed != round_index:
            discussion = memory.chat_in_round(revealed)
            if discussion:
                lines.append("")
                lines.append(f"## Discussion from round {revealed}")
                for message in discussion:
                    lines.append(f"- {self._display_name(message.sender_id)}: {message.body}")
        this_round = memory.chat_in_round(round_index)
        if this_round:
            lines.append("")
            lines.append("## Chat this round")
            for message in this_round:
                lines.append(f"- {self._display_name(message.sender_id)}: {message.body}")
        lines.append("")
        if phase is RoundPhase.DISCUSSING:
            lines.append(
                f"Round {round_index} estimates are revealed. Use chat to justify "
                "your estimate or respond to the others."
            )
        else:
            lines.append(
                f"It is round {round_index}. Use make_estimation to commit your "
                "estimate, or chat first if you need clarification."
            )
        return "\n".join(lines)

    def _attribution(self, participant_id: str) -> str:
        participant = self.memory.participants.get(participant_id)
        if participant is None:
            return participant_id
        label = participant.role_label or participant.kind.value
        suffix = " (you)" if participant_id == self.memory.participant_id else ""
        return f"{participant.display_name} ({label}){suffix}"

    def _display_name(self, participant_id: str) -> str:
        participant = self.memory.participants.get(participant_id)
        return participant.display_name if participant else participant_id

    # -------------------------------------------------------------- loop

    def decide(self, session, phase: RoundPhase = RoundPhase.ESTIMATING) -> Optional[ReactStep]:
        """One agent turn: ReAct until the phase's terminal action succeeds.

        Model calls are capped at max_react_steps; malformed output earns at
        most two corrective re-prompts; if the loop ends without committing
        during an estimating turn, a fallback estimate is submitted.
        """
        memory = self.memory
        round_index = memory.current_round
        if memory.story is None or round_index < 1:
            raise ValidationError("no open round to act in")
        turns = [
            ChatTurn(role="system", content=self.system_prompt()),
            ChatTurn(role="user", content=self.build_round_context(round_index, phase)),
        ]
        # new context = any peer chat on this story since this agent's last
        # turn; the agent's own messages do not license another question
        fresh_chat = any(
            m.sequence > max(self._chat_watermark, memory.story_presented_at)
            and m.sender_id != memory.participant_id
            for m in memory.chat_history
        )
        self._chat_watermark = max(
            [m.sequence for m in memory.chat_history] or [self._chat_watermark]
        )
        may_chat = phase is RoundPhase.DISCUSSING or round_index == 1 or fresh_chat
        calls = 0
        reprompts = 0
        while calls < self.config.max_react_steps:
            try:
                reply = complete(self.config.binding, turns)
            except ScriptUnderrunError:
                raise
            except TransportError as err:
                raise AgentUnavailableError(str(err)) from err
            calls += 1
            turns.append(ChatTurn(role="assistant", content=reply))
            try:
                step = parse_react(reply)
            except ReactParseError as err:
                step = self._sentinel_rescue(reply, phase, err)
                if step is None:
                    if reprompts < 2 and calls < self.config.max_react_steps:
                        reprompts += 1
                        memory.record(kind="reprompt", error=str(err), span=err.span)
                        turns.append(ChatTurn(role="user", content=CORRECTIVE_PROMPT))
                        continue
                    break
            if step.action == ACTION_CHAT and phase is RoundPhase.ESTIMATING and not may_chat:
                memory.record(kind="nudge", reason="no new context for another question")
                turns.append(ChatTurn(role="user", content=NO_NEW_CONTEXT_NUDGE))
                continue
            observation = self.execute_action(step, session)
            turns.append(ChatTurn(role="user", content=f"Observation: {observation}"))
            done = (
                (phase is RoundPhase.ESTIMATING and step.action == ACTION_MAKE_ESTIMATION)
                or (phase is RoundPhase.DISCUSSING and step.action == ACTION_CHAT)
            )
            if done and not observation.startswith("rejected"):
                return step
        if phase is RoundPhase.ESTIMATING:
            return self._fallback_estimate(session, round_index)
        memory.record(kind="exhausted", phase=phase.value, round=round_index)
        return None

    def _sentinel_rescue(
        self, reply: str, phase: RoundPhase, err: ReactParseError
    ) -> Optional[ReactStep]:
        """A fine-tuned model may answer in Listing-1 form instead of ReAct;
        during estimation, honor the sentinel before re-prompting."""
        if phase is not RoundPhase.ESTIMATING or ESTIMATE_SENTINEL.lower() not in reply.lower():
            return None
        try:
            points = parse_estimate_reply(reply)
        except EstimateParseError:
            return None
        self.memory.record(kind="sentinel_rescue", reply=reply[:120])
        return ReactStep(
            thought="Reply used the estimation sentinel instead of the ReAct format.",
            action=ACTION_MAKE_ESTIMATION,
            action_input={"points": format_points(points)},
        )

    def execute_action(self, step: ReactStep, session) -> str:
        """Run one step against the session; the engine's answer (ack or
        rejection) becomes the observation and is recorded in the trace."""
        memory = self.memory
        pid = memory.participant_id
        try:
            if step.action == ACTION_CHAT:
                session.post_chat(pid, step.action_input["message"])
                observation = "message delivered"
            else:
                snapped = snap_to_deck(as_points(step.action_input["points"]), self.deck)
                # submit_estimate may trigger an auto-reveal whose events
                # reach this agent synchronously and advance memory; pin the
                # round and the map before the command runs
                round_index, own = memory.current_round, memory.own_estimates
                session.submit_estimate(pid, snapped)
                own[round_index] = snapped
                observation = f"estimate {format_points(snapped)} recorded"
        except DomainError as err:
            observation = f"rejected: {err}"
        memory.record(kind="step", step=step, observation=observation)
        return observation

    def _fallback_estimate(self, session, round_index: int) -> Optional[ReactStep]:
        """Step budget exhausted: own last estimate, else snapped peer
        median, else the deck median."""
        memory = self.memory
        own = memory.latest_own_estimate()
        if own is not None:
            points, source = own, "own last estimate"
        else:
            peers = memory.latest_peer_estimates()
            if peers:
                ordered = sorted(peers.values())
                mid = len(ordered) // 2
                if len(ordered) % 2:
                    median = ordered[mid]
                else:
                    median = (ordered[mid - 1] + ordered[mid]) / 2
                points, source = snap_to_deck(median, self.deck), "peer median"
            else:
                points, source = snap_to_deck(self.deck.median, self.deck), "deck median"
        memory.record(kind="fallback", source=source, points=format_points(points))
        logger.info(
            "agent %s falling back to %s (%s)",
            memory.participant_id, format_points(points), source,
        )
        step = ReactStep(
            thought=f"Step budget exhausted; falling back to {source}.",
            action=ACTION_MAKE_ESTIMATION,
            action_input={"points": format_points(points)},
        )
        observation = self.execute_action(step, session)
        if observation.startswith("rejected"):
            return None
        return step


def init_agent(config: AgentConfig) -> Agent:
    """Agent with empty short-term memory and the role-play identity baked
    into its prompt preamble."""
    return Agent(config)
