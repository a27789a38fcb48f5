"""`server` command: host estimation sessions from a config file.

The config is one JSON document covering the bind address, the session
(participants, stories, deck, rounds, consensus rule) and the agent
roster. Join tokens are printed to stdout once at startup - hand them to
participants out of band; they appear in no log output.

    server --config session.json

Config shape:

    {
      "host": "127.0.0.1", "port": 8765,
      "session": {
        "session_id": "sprint-7",
        "participants": [
          {"id": "sm", "display_name": "Sam", "kind": "facilitator"},
          {"id": "dev-1", "display_name": "Backend agent",
           "kind": "agent", "role_label": "backend"},
          {"id": "alice", "display_name": "Alice", "kind": "human"}
        ],
        "stories": [{"id": "S-1", "title": "..."}],        // or stories_file
        "deck": [1, 2, 3, 5, 8, 13, 21],
        "max_rounds": 3,
        "consensus_rule": {"mode": "exact-match"},
        "auto_facilitate": true
      },
      "agents": [{"participant_id": "dev-1", "binding": "main",
                  "example_count": 2, "max_react_steps": 5}],
      "bindings": "bindings.json",       // path or inline list
      "examples": {"path": "history.csv"} // few-shot corpus, also fills
                                           // the past-story panel
    }

Paths inside the config resolve relative to the config file itself.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from ..agents import Agent, AgentConfig
from ..bench.corpus import ColumnMapping, load_corpus
from ..core import DomainError, UserStory, ValidationError
from ..events import EventLogWriter
from ..gateway import GatewayError, binding_from_config, load_bindings
from ..points import PointsError, format_points
from .agentclient import AgentClient
from .hub import SessionHost
from .service import SessionStore, create_app, start_heartbeat


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def _load_stories_csv(path: Path) -> List[dict]:
    """Plain story file: id,title[,description] - no effort labels."""
    with open(path, newline="", encoding="utf-8") as fp:
        reader = csv.DictReader(fp)
        if reader.fieldnames is None or not {"id", "title"} <= set(reader.fieldnames):
            raise ValidationError(f"{path}: story file needs id and title columns")
        stories = []
        for row in reader:
            stories.append(
                {
                    "id": row["id"],
                    "title": row["title"],
                    "description": (row.get("description") or "").strip() or None,
                }
            )
    if not stories:
        raise ValidationError(f"{path}: story file has no rows")
    return stories


def _load_examples(doc: dict, base: Path) -> List[Tuple[UserStory, object]]:
    mapping = ColumnMapping(
        id=doc.get("id_column", "issuekey"),
        title=doc.get("title_column", "title"),
        points=doc.get("points_column", "storypoint"),
        description=doc.get("description_column", "description"),
    )
    corpus = load_corpus(
        _resolve(base, doc["path"]),
        project_code=doc.get("project"),
        mapping=mapping,
    )
    return [(story, story.ground_truth_points) for story in corpus.stories]


def _resolve_bindings(spec: object, base: Path) -> Dict[str, object]:
    if spec is None:
        return {}
    if isinstance(spec, str):
        return load_bindings(_resolve(base, spec))
    if isinstance(spec, list):
        bindings: Dict[str, object] = {}
        for i, record in enumerate(spec):
            try:
                binding = binding_from_config(record)
            except ValidationError as err:
                raise ValidationError(f"bindings entry {i}: {err}") from err
            if binding.name in bindings:
                raise ValidationError(f"duplicate binding name {binding.name!r}")
            bindings[binding.name] = binding
        return bindings
    raise ValidationError("bindings must be a path or a list of binding configs")


def _build_agents(
    config: dict,
    host: SessionHost,
    bindings: Dict[str, object],
    examples: List[Tuple[UserStory, object]],
) -> List[AgentClient]:
    clients = []
    for i, entry in enumerate(config.get("agents", [])):
        if not isinstance(entry, dict):
            raise ValidationError(f"agents[{i}] must be an object")
        pid = entry.get("participant_id")
        participant = host.engine.participant(str(pid))
        if not participant.is_estimator:
            raise ValidationError(f"agents[{i}]: {pid!r} is the facilitator")
        binding_name = entry.get("binding")
        if binding_name not in bindings:
            known = ", ".join(sorted(bindings)) or "none loaded"
            raise ValidationError(
                f"agents[{i}]: unknown binding {binding_name!r} (known: {known})"
            )
        agent_config = AgentConfig(
            role_label=participant.role_label or participant.display_name,
            binding=bindings[binding_name],
            example_count=entry.get("example_count", 0),
            max_react_steps=entry.get("max_react_steps", 5),
            corpus=tuple(examples),
            include_description=entry.get("include_description", True),
        )
        clients.append(AgentClient(Agent(agent_config), host, host.tokens[participant.id]))
    return clients


def _default_run_server(app, host: str, port: int) -> None:
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="info")


def main(argv: Optional[List[str]] = None, run_server=_default_run_server) -> int:
    parser = argparse.ArgumentParser(
        prog="server", description="Host Planning Poker estimation sessions."
    )
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--host", default=None, help="bind address override")
    parser.add_argument("--port", type=int, default=None, help="bind port override")
    parser.add_argument(
        "--log-dir", default=None, help="append each session's event log here"
    )
    args = parser.parse_args(argv)

    try:
        config_path = Path(args.config)
        with open(config_path, encoding="utf-8") as fp:
            config = json.load(fp)
        if not isinstance(config, dict):
            raise ValidationError("config must be a JSON object")
        base = config_path.resolve().parent

        session_doc = config.get("session")
        if not isinstance(session_doc, dict):
            raise ValidationError("config needs a session object")
        session_doc = dict(session_doc)
        stories_file = session_doc.pop("stories_file", None)
        if stories_file is not None:
            if "stories" in session_doc:
                raise ValidationError("give stories or stories_file, not both")
            session_doc["stories"] = _load_stories_csv(_resolve(base, stories_file))

        examples: List[Tuple[UserStory, object]] = []
        if config.get("examples") is not None:
            examples = _load_examples(config["examples"], base)
            session_doc.setdefault(
                "past_stories",
                [
                    {"title": story.title, "points": format_points(points)}
                    for story, points in examples
                ],
            )

        store = SessionStore()
        host = store.create(session_doc)
        bindings = _resolve_bindings(config.get("bindings"), base)
        clients = _build_agents(config, host, bindings, examples)
    except (
        ValidationError,
        DomainError,
        PointsError,
        GatewayError,
        OSError,
        json.JSONDecodeError,
    ) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1

    log_writer = None
    if args.log_dir:
        log_dir = Path(args.log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        log_writer = EventLogWriter(log_dir / f"{host.session_id}.ndjson")
        for event in host.engine.events():
            log_writer.append(event)
        host.engine.subscribe(log_writer.append)

    print(f"session {host.session_id}")
    print("join tokens (hand out to participants, keep out of logs):")
    for pid, token in host.tokens.items():
        print(f"  {pid}: {token}")

    for client in clients:
        client.start()

    app = create_app(store)
    bind_host = args.host or config.get("host", "127.0.0.1")
    bind_port = args.port if args.port is not None else config.get("port", 8765)
    stop_heartbeat = start_heartbeat(store, host.heartbeat_interval)
    try:
        run_server(app, bind_host, bind_port)
    finally:
        stop_heartbeat.set()
        for client in clients:
            client.stop(timeout=2.0)
        if log_writer is not None:
            log_writer.close()
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
