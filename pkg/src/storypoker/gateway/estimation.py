"""The single-shot estimation prompt and its reply parser.

The conversation shape here is the one the fine-tune exporter writes, so
training prompts and inference prompts match exactly.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import List, Optional

from ..core import UserStory
from ..points import PointsLike, as_points, format_points
from .bindings import ChatTurn, GatewayError

ESTIMATION_SYSTEM_PROMPT = (
    "You are an expert software development effort estimator. "
    "Given a software development issue summary, predict the effort in story points."
)

ESTIMATE_SENTINEL = "My estimated story point is:"

# A standalone non-negative number: integer, decimal, or n/d fraction, not
# glued to a preceding digit, dot, or minus sign.
_NUMBER = re.compile(r"(?<![\d.\-])(\d+/\d+|\d+(?:\.\d+)?)")
_SENTINEL = re.compile(r"my estimated story points? (?:is|are)\s*:?", re.IGNORECASE)


class EstimateParseError(GatewayError):
    """No usable number in a model's estimation reply."""


def render_story_block(story: UserStory, include_description: bool = True) -> str:
    """The "### Summary:" block for a story.

    The title is flattened to one line so the summary stays a single block;
    the description, when included, follows after a blank line.
    """
    summary = " ".join(story.title.split())
    content = "### Summary:\n" + summary
    if include_description and story.description:
        content += "\n\n" + story.description
    return content


def render_estimation_conversation(
    story: UserStory, include_description: bool = True
) -> List[ChatTurn]:
    """System + user turns of the Listing-style estimation prompt."""
    return [
        ChatTurn(role="system", content=ESTIMATION_SYSTEM_PROMPT),
        ChatTurn(role="user", content=render_story_block(story, include_description)),
    ]


def render_estimate_reply(points: PointsLike) -> str:
    """The assistant turn for a known estimate, minimally rendered."""
    return f"{ESTIMATE_SENTINEL} {format_points(as_points(points))}"


def parse_estimate_reply(text: str) -> Fraction:
    """Extract the estimate from a model reply.

    Prefers the first number after the sentinel phrase; otherwise takes the
    last standalone non-negative number anywhere in the text. Snapping to a
    deck is the caller's concern.
    """
    candidate = _sentinel_number(text)
    if candidate is None:
        matches = _NUMBER.findall(text)
        candidate = matches[-1] if matches else None
    if candidate is None:
        raise EstimateParseError(f"no estimate found in reply: {text[:80]!r}")
    return as_points(candidate)


def _sentinel_number(text: str) -> Optional[str]:
    anchor = _SENTINEL.search(text)
    if anchor is None:
        return None
    match = _NUMBER.search(text, anchor.end())
    return match.group(1) if match else None
