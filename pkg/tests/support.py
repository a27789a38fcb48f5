"""Shared test helpers: canned rosters and a randomized session driver.

The driver issues only commands that are valid in the current state, so any
rejection or invariant breach it provokes is an engine bug, not test noise.
"""

import random
from collections import Counter

from storypoker import (
    DEFAULT_DECK,
    ConsensusRule,
    Deck,
    Estimate,
    EventKind,
    Participant,
    ParticipantKind,
    RoundPhase,
    SessionConfig,
    SessionEvent,
    UserStory,
    check_consensus,
    create_session,
    parse_points,
    replay,
)

FACILITATOR = Participant(id="fac", display_name="Pat", kind=ParticipantKind.FACILITATOR)


def make_participants(n_estimators=3):
    out = [FACILITATOR]
    for i in range(n_estimators):
        if i % 2 == 0:
            out.append(
                Participant(id=f"dev{i}", display_name=f"Dev {i}", kind=ParticipantKind.HUMAN)
            )
        else:
            out.append(
                Participant(
                    id=f"dev{i}",
                    display_name=f"Agent {i}",
                    kind=ParticipantKind.AGENT,
                    role_label="back-end developer",
                )
            )
    return tuple(out)


def make_stories(n=1):
    return tuple(
        UserStory(id=f"st{i}", title=f"Story {i}", description=f"Body {i}") for i in range(n)
    )


def make_config(**overrides):
    base = dict(
        participants=make_participants(),
        story_queue=make_stories(),
        max_rounds=3,
    )
    base.update(overrides)
    return SessionConfig(**base)


def join_all(session):
    for p in session.participants():
        session.join(p.id)


def random_config(rng):
    decks = [DEFAULT_DECK, Deck((0, 0.5, 1, 2, 3, 5, 8, 13, 21))]
    rules = [ConsensusRule.exact_match(), ConsensusRule.max_spread(rng.choice([1, 2]))]
    return SessionConfig(
        participants=make_participants(rng.randint(2, 4)),
        story_queue=make_stories(rng.randint(1, 3)),
        deck=rng.choice(decks),
        consensus_rule=rng.choice(rules),
        max_rounds=rng.randint(1, 3),
    )


def _weighted_actions(session):
    cfg = session.config
    roster = {p.id: p for p in session.participants()}
    present = session.present_ids()
    fac = cfg.facilitator.id
    rnd = session.current_round()
    acts = []

    def add(act, weight):
        acts.extend([act] * weight)

    for pid in roster:
        if pid not in present:
            add(("join", pid), 3 if pid == fac else 2)
    for pid in present:
        add(("leave", pid), 1)
        add(("chat", pid), 1)
    estimator_present = any(roster[pid].is_estimator for pid in present)
    if fac in present:
        if session.current_story() is None and session.pending_stories() and estimator_present:
            add(("present", fac), 6)
        if rnd is not None and rnd.phase is RoundPhase.DISCUSSING:
            if rnd.index < cfg.max_rounds and estimator_present:
                add(("next_round", fac), 6)
        if rnd is not None and rnd.phase is RoundPhase.ESTIMATING:
            for pid in rnd.missing():
                if not (rnd.effective_required == {pid} and not rnd.estimates):
                    add(("absent", pid), 1)
            if rnd.estimates:
                add(("force_reveal", fac), 1)
    if rnd is not None and rnd.phase is RoundPhase.ESTIMATING:
        for pid in present:
            if roster[pid].is_estimator:
                weight = 6 if pid in rnd.missing() else 1
                add(("submit", pid), weight)
    return acts


def drive_random_session(seed, max_steps=300):
    """Run one session under a random but always-valid command stream."""
    rng = random.Random(seed)
    session = create_session(random_config(rng))
    fac = session.config.facilitator.id
    for _ in range(max_steps):
        if not session.pending_stories() and session.current_story() is None:
            if session.results():
                break
        acts = _weighted_actions(session)
        if not acts:
            break
        kind, pid = rng.choice(acts)
        if kind == "join":
            session.join(pid)
        elif kind == "leave":
            session.leave(pid)
        elif kind == "chat":
            session.post_chat(pid, f"note {rng.randrange(10_000)}")
        elif kind == "present":
            session.present_story(fac)
        elif kind == "next_round":
            session.start_next_round(fac)
        elif kind == "absent":
            session.mark_absent(fac, pid)
        elif kind == "force_reveal":
            session.force_reveal(fac)
        elif kind == "submit":
            session.submit_estimate(pid, rng.choice(session.config.deck.values))
    return session


def assert_session_invariants(session):
    events = session.events()
    sequences = [e.sequence for e in events]
    assert sequences == list(range(1, len(events) + 1)), "sequence gap or reorder"

    clone = replay(session.config, events)
    assert clone.snapshot() == session.snapshot(), "replay diverged from live state"

    lines = [e.to_json() for e in events]
    assert [SessionEvent.from_json(line).to_json() for line in lines] == lines

    reveals = Counter()
    for i, event in enumerate(events):
        if event.kind is not EventKind.ROUND_REVEALED:
            continue
        reveals[event.payload["story_id"]] += 1
        revealed = [
            Estimate(
                participant_id=item["participant_id"],
                round_index=event.payload["index"],
                points=parse_points(item["points"]),
                submitted_at=item["submitted_at"],
            )
            for item in event.payload["estimates"]
        ]
        expected = check_consensus(revealed, session.config.consensus_rule)
        assert event.payload["consensus"] == expected
        followed_by_consensus = (
            i + 1 < len(events) and events[i + 1].kind is EventKind.CONSENSUS_REACHED
        )
        assert followed_by_consensus == expected

    for result in session.results():
        assert result.points in session.config.deck.values
        assert 1 <= reveals[result.story.id] <= session.config.max_rounds
