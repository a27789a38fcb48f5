"""Agent roster configuration: a JSON list describing which agents join a
session, each naming a model binding registered with the gateway."""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

from ..core import Participant, ParticipantKind, ValidationError
from .agent import Agent, AgentConfig, init_agent
from .similarity import Example

_ID_SAFE = re.compile(r"[^a-z0-9]+")


def _slug(display_name: str) -> str:
    slug = _ID_SAFE.sub("-", display_name.lower()).strip("-")
    return slug or "agent"


def load_agent_roster(
    source: Union[str, Path, Sequence[dict]],
    bindings: Dict[str, object],
    corpus: Sequence[Example] = (),
) -> List[Tuple[Participant, Agent]]:
    """Build (participant, agent) pairs from roster entries.

    `source` is a path to a JSON file or an already-parsed list. Each entry
    needs display_name, role_label, and binding (a key into `bindings`);
    k, max_react_steps, and id are optional. Errors cite the entry index.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            entries = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise ValidationError(f"roster {path}: invalid JSON: {err}") from err
    else:
        entries = source
    if isinstance(entries, (dict, str, bytes)) or not isinstance(entries, Sequence):
        raise ValidationError("roster must be a JSON list of agent entries")
    entries = list(entries)
    pairs: List[Tuple[Participant, Agent]] = []
    seen_ids = set()
    for index, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ValidationError(f"roster entry {index}: expected an object")
        try:
            display_name = entry["display_name"]
            role_label = entry["role_label"]
            binding_name = entry["binding"]
        except KeyError as err:
            raise ValidationError(f"roster entry {index}: missing {err.args[0]!r}") from err
        if binding_name not in bindings:
            known = ", ".join(sorted(bindings)) or "none registered"
            raise ValidationError(
                f"roster entry {index}: unknown binding {binding_name!r} (known: {known})"
            )
        participant_id = entry.get("id") or _slug(display_name)
        if participant_id in seen_ids:
            raise ValidationError(f"roster entry {index}: duplicate id {participant_id!r}")
        seen_ids.add(participant_id)
        try:
            config = AgentConfig(
                role_label=role_label,
                binding=bindings[binding_name],
                example_count=int(entry.get("k", 0)),
                max_react_steps=int(entry.get("max_react_steps", 5)),
                corpus=tuple(corpus),
            )
            participant = Participant(
                id=participant_id,
                display_name=display_name,
                kind=ParticipantKind.AGENT,
                role_label=config.role_label,
            )
        except (ValidationError, TypeError, ValueError) as err:
            raise ValidationError(f"roster entry {index}: {err}") from err
        pairs.append((participant, init_agent(config)))
    return pairs
