"""Agent system-prompt assembly.

The skeleton below is the agent's fixed operating charter; only the five
named tokens vary. Substitution is checked for residue so a prompt with a
dangling placeholder can never reach a model. The wording, including the
"You objective" phrasing in the strategy section, is intentional and frozen
by golden-file tests.
"""

from __future__ import annotations

from typing import Sequence

from ..core import UserStory, ValidationError
from ..gateway.estimation import render_story_block
from ..points import as_points, format_points
from .similarity import Example

ROLE_PLAY_TEMPLATE = "You are a {role} developer agent."

SYSTEM_TEMPLATE = """{{ROLE-PLAY PROMPT}}

You are an agent that participates in a planning poker session with other agents and human players.

## Actions
You have access to actions that you can use. Think carefully about which actions to use.

Available actions:
{{ACTIONS DESCRIPTION}}

## Input format
You will receive game state and chat history updates.

## Output format
Always follow this format:

Thought: your reasoning about what to do next
Action: the_action_name
Action Input: {"param1": "value1", "param2": "value2"}

## Planning poker rules
{{GAME RULE}}

## Strategy
You objective is to communicate via chat with other players to come up with the best estimation for the given user story. For better estimation, you should base your estimation on the past user stories and similar user stories.

In the first round, you can either make an estimation or ask questions to clarify the user story. For the following rounds, you should justify your estimation based on similar user stories and consider others' estimations.

{{PAST STORIES SECTION}}## User story to be estimated
{{USER STORY}}"""

PAST_STORIES_SECTION = """## Past user stories
For reference, you can use the following past user stories to help you make your estimation:

{{PAST USER STORIES}}

"""

DEFAULT_ACTIONS_DESCRIPTION = """\
- chat: send a message to every participant in the session. Action Input: {"message": "<your message>"}
- make_estimation: commit to an estimate for the current user story. Action Input: {"points": <number>}"""

DEFAULT_GAME_RULES = """\
- Each round, every estimator privately picks an estimate from the deck; estimates are revealed together once everyone has submitted.
- If the revealed estimates agree, the story is finalized at that value.
- Otherwise the group discusses and re-estimates in the next round, up to the session's round limit.
- Estimates must be values from the session deck."""


def render_past_stories(examples: Sequence[Example]) -> str:
    blocks = []
    for story, points in examples:
        blocks.append(
            render_story_block(story, include_description=False)
            + f"\nMy estimated story point is: {format_points(as_points(points))}"
        )
    return "\n\n".join(blocks)


def build_system_prompt(
    role_label: str,
    story: UserStory,
    examples: Sequence[Example] = (),
    rules: str = DEFAULT_GAME_RULES,
    actions_description: str = DEFAULT_ACTIONS_DESCRIPTION,
    include_description: bool = True,
) -> str:
    """Substitute every token of the skeleton; the past-stories section is
    omitted entirely when there are no examples."""
    role = role_label.strip()
    if not role:
        raise ValidationError("role_label must be nonempty")
    if examples:
        past_section = PAST_STORIES_SECTION.replace(
            "{{PAST USER STORIES}}", render_past_stories(examples)
        )
    else:
        past_section = ""
    prompt = (
        SYSTEM_TEMPLATE
        .replace("{{ROLE-PLAY PROMPT}}", ROLE_PLAY_TEMPLATE.format(role=role))
        .replace("{{ACTIONS DESCRIPTION}}", actions_description)
        .replace("{{GAME RULE}}", rules)
        .replace("{{PAST STORIES SECTION}}", past_section)
        .replace("{{USER STORY}}", render_story_block(story, include_description))
    )
    if "{{" in prompt:
        raise ValidationError("unsubstituted placeholder in system prompt")
    return prompt
