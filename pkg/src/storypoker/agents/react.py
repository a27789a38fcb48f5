"""The ReAct output grammar: Thought / Action / Action Input.

parse_react is the only place model text becomes structure. It is tolerant
about prose around the block and strict about the block itself: the three
labels in order, a known action name, and a JSON action input with the
fields that action requires.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Mapping

from ..core import ValidationError
from ..events import canonical_json
from ..points import PointsError, as_points

ACTION_CHAT = "chat"
ACTION_MAKE_ESTIMATION = "make_estimation"
ACTIONS = (ACTION_CHAT, ACTION_MAKE_ESTIMATION)


class ReactParseError(ValidationError):
    """Model output does not follow the ReAct format; `span` is the
    offending slice of text."""

    def __init__(self, message: str, span: str):
        self.span = span
        super().__init__(f"{message}: {span!r}")


@dataclass(frozen=True)
class ReactStep:
    """One parsed Thought/Action/Action Input triple."""

    thought: str
    action: str
    action_input: Mapping

    def __post_init__(self) -> None:
        if self.action not in ACTIONS:
            raise ValidationError(f"unknown action {self.action!r}")
        object.__setattr__(self, "action_input", dict(self.action_input))
        try:
            canonical_json(self.action_input)
        except (TypeError, ValueError) as err:
            raise ValidationError(f"action input is not JSON-representable: {err}")
        if self.action == ACTION_CHAT:
            message = self.action_input.get("message")
            if not isinstance(message, str) or not message.strip():
                raise ValidationError('chat action requires a nonempty "message"')
        else:
            points = self.action_input.get("points")
            if isinstance(points, bool) or not isinstance(points, (int, float, str)):
                raise ValidationError('make_estimation requires a numeric "points"')
            try:
                as_points(points)
            except PointsError as err:
                raise ValidationError(f'bad "points" value: {err}')


_BLOCK = re.compile(
    r"^[ \t]*Thought:[ \t]*(?P<thought>.*?)\s*"
    r"^[ \t]*Action:[ \t]*(?P<action>[^\n]*?)[ \t]*$\s*"
    r"^[ \t]*Action Input:[ \t]*(?P<input>.*?)(?=^[ \t]*Thought:|\Z)",
    re.MULTILINE | re.DOTALL,
)


def parse_react(text: str) -> ReactStep:
    """Parse the last complete ReAct block out of model text.

    Prose before or after the block is discarded; trailing junk after the
    action-input JSON object is tolerated.
    """
    matches = list(_BLOCK.finditer(text))
    if not matches:
        raise ReactParseError(
            "no Thought/Action/Action Input block found", span=text.strip()[:120]
        )
    block = matches[-1]
    action = block.group("action").strip()
    if action not in ACTIONS:
        raise ReactParseError(
            f"unknown action (expected one of {', '.join(ACTIONS)})", span=action[:120]
        )
    raw_input = block.group("input").strip()
    action_input = _parse_action_input(raw_input)
    try:
        return ReactStep(
            thought=block.group("thought").strip(), action=action, action_input=action_input
        )
    except ValidationError as err:
        raise ReactParseError(str(err), span=raw_input[:120]) from err


def _parse_action_input(raw: str) -> dict:
    start = raw.find("{")
    if start < 0:
        raise ReactParseError("action input is not a JSON object", span=raw[:120])
    try:
        value, _ = json.JSONDecoder().raw_decode(raw, start)
    except json.JSONDecodeError as err:
        raise ReactParseError(f"action input is not valid JSON ({err})", span=raw[:120])
    if not isinstance(value, dict):
        raise ReactParseError("action input must be a JSON object", span=raw[:120])
    return value


def render_react(step: ReactStep) -> str:
    """Canonical text form; parse_react inverts it exactly."""
    return (
        f"Thought: {step.thought}\n"
        f"Action: {step.action}\n"
        f"Action Input: {canonical_json(step.action_input)}"
    )
