"""Regenerate the synthetic corpus fixtures (mesos.csv, usergrid.csv, td.csv,
zeros.csv). Deterministic: same seed, same bytes. Run from this directory:

    python3 make_corpora.py

Counts and point ranges mirror the published per-project statistics the
benchmark is specified against; titles and descriptions are invented. Some
fields contain commas, quotes, and newlines on purpose so loaders must do
real CSV parsing.
"""

from __future__ import annotations

import csv
import random
from pathlib import Path

HERE = Path(__file__).parent

COMPONENTS = [
    "allocator", "scheduler", "executor", "containerizer", "registry",
    "replicated log", "web UI", "agent", "master", "CLI", "metrics endpoint",
    "authorizer", "fetcher", "reservation API", "maintenance mode",
]
VERBS = [
    "Support", "Fix", "Add", "Expose", "Document", "Refactor", "Validate",
    "Deprecate", "Benchmark", "Harden",
]
OBJECTS = [
    "quota enforcement", "role constraints", "failover timeouts", "TLS certs",
    "GPU isolation", "disk quotas", "task reconciliation", "health checks",
    "rate limits", "log rotation", "pagination", "retry backoff",
    "session tokens", "resource hints", "label filters",
]
DETAILS = [
    "Seen on large clusters only.",
    "Requested by several operators, see mailing list thread.",
    'The config key "{key}" is ignored when unset.',
    "Steps to reproduce:\n1. start two agents\n2. kill the leader\n3. observe the stale entry",
    "Affects upgrades from the previous minor release, rollback is safe.",
    "Acceptance: flag is on by default, docs updated, metrics exported.",
]


def _title(rng: random.Random) -> str:
    verb = rng.choice(VERBS)
    obj = rng.choice(OBJECTS)
    component = rng.choice(COMPONENTS)
    return f"{verb} {obj} in the {component}"


def _description(rng: random.Random) -> str:
    detail = rng.choice(DETAILS).replace("{key}", rng.choice(OBJECTS).replace(" ", "_"))
    return f"As an operator, I want {rng.choice(OBJECTS)}, so that the {rng.choice(COMPONENTS)} stays predictable. {detail}"


def _write(name: str, prefix: str, allocation: dict, seed: int, described: float) -> None:
    rng = random.Random(seed)
    points = [value for value, count in allocation.items() for _ in range(count)]
    rng.shuffle(points)
    with (HERE / name).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["issuekey", "title", "description", "storypoint"])
        for index, value in enumerate(points):
            key = f"{prefix}-{1000 + index}"
            description = _description(rng) if rng.random() < described else ""
            writer.writerow([key, _title(rng), description, value])


def main() -> None:
    # Row counts match the published per-project story counts.
    _write(
        "mesos.csv",
        "MESOS",
        {"1": 50, "2": 83, "3": 132, "5": 83, "8": 50, "13": 16},
        seed=414,
        described=0.6,
    )
    _write(
        "usergrid.csv",
        "USERGRID",
        {"1": 8, "2": 25, "3": 40, "5": 22, "8": 5},
        seed=100,
        described=0.5,
    )
    _write(
        "td.csv",
        "TDQ",
        {"0.5": 4, "1": 6, "2": 10, "3": 12, "5": 14, "8": 13, "13": 9, "21": 4, "40": 1},
        seed=73,
        described=0.7,
    )
    # Small synthetic file with zero-point rows for zero-truth policy tests.
    _write(
        "zeros.csv",
        "ZP",
        {"0": 2, "1": 2, "3": 2, "5": 2},
        seed=8,
        described=0.5,
    )


if __name__ == "__main__":
    main()
