"""Estimation agents: ReAct loop, prompt assembly, short-term memory, and
in-context example selection."""

from .agent import Agent, AgentConfig, AgentUnavailableError, init_agent
from .memory import ShortTermMemory
from .prompts import (
    DEFAULT_ACTIONS_DESCRIPTION,
    DEFAULT_GAME_RULES,
    ROLE_PLAY_TEMPLATE,
    build_system_prompt,
    render_past_stories,
)
from .react import (
    ACTION_CHAT,
    ACTION_MAKE_ESTIMATION,
    ACTIONS,
    ReactParseError,
    ReactStep,
    parse_react,
    render_react,
)
from .roster import load_agent_roster
from .similarity import lexical_similarity, select_examples, similarity_squared

__all__ = [
    "ACTIONS",
    "ACTION_CHAT",
    "ACTION_MAKE_ESTIMATION",
    "Agent",
    "AgentConfig",
    "AgentUnavailableError",
    "DEFAULT_ACTIONS_DESCRIPTION",
    "DEFAULT_GAME_RULES",
    "ROLE_PLAY_TEMPLATE",
    "ReactParseError",
    "ReactStep",
    "ShortTermMemory",
    "build_system_prompt",
    "init_agent",
    "lexical_similarity",
    "load_agent_roster",
    "parse_react",
    "render_past_stories",
    "render_react",
    "select_examples",
]
