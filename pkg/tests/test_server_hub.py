"""SessionHost behavior: connect, broadcast, resync, heartbeat, dispatch."""

import json

import pytest

from storypoker.core import Deck, Participant, UserStory
from storypoker.server import (
    CLOSE_HEARTBEAT,
    CLOSE_NORMAL,
    CLOSE_OVERFLOW,
    AuthError,
    ProtocolError,
    SessionHost,
    auto_facilitate,
    client_frame,
)
from storypoker.server.facilitator import DISCUSSION_PROMPT
from storypoker.session import SessionConfig


def make_config(stories=("S-1", "S-2"), deck=(1, 2, 3, 5, 8), max_rounds=3):
    return SessionConfig(
        participants=(
            Participant("sm", "Sam", "facilitator"),
            Participant("a", "Ann", "human"),
            Participant("b", "Ben", "human"),
        ),
        story_queue=tuple(UserStory(sid, f"Work on {sid}") for sid in stories),
        deck=Deck(deck),
        max_rounds=max_rounds,
    )


def make_host(**kwargs):
    config = kwargs.pop("config", None) or make_config(
        stories=kwargs.pop("stories", ("S-1", "S-2")),
        deck=kwargs.pop("deck", (1, 2, 3, 5, 8)),
        max_rounds=kwargs.pop("max_rounds", 3),
    )
    return SessionHost("hub-test", config, **kwargs)


def drain(conn):
    """Split the outbound queue into parsed frames and close sentinels."""
    frames, closes = [], []
    while not conn.outbound.empty():
        item = conn.outbound.get_nowait()
        if item[0] == "close":
            closes.append((item[1], item[2]))
        else:
            frames.append(json.loads(item[1]))
    return frames, closes


def frames_of(conn):
    return drain(conn)[0]


def events_of(frames):
    return [f for f in frames if f["type"] not in ("welcome", "ack", "error", "ping")]


def send(host, conn, type, payload=None):
    host.dispatch(conn, client_frame(type, payload or {}))


# ----------------------------------------------------------------- connect


def test_connect_rejects_unknown_token():
    host = make_host()
    with pytest.raises(AuthError, match="invalid session token"):
        host.connect("not-a-token")


def test_tokens_are_per_participant_and_distinct():
    host = make_host()
    assert set(host.tokens) == {"sm", "a", "b"}
    assert len(set(host.tokens.values())) == 3
    assert all(len(t) >= 16 for t in host.tokens.values())


def test_welcome_is_the_first_frame_and_describes_the_session():
    host = make_host()
    conn = host.connect(host.tokens["a"])
    frames = frames_of(conn)
    welcome = frames[0]
    assert welcome["type"] == "welcome"
    payload = welcome["payload"]
    assert payload["participant"]["id"] == "a"
    assert payload["deck"] == ["1", "2", "3", "5", "8"]
    assert payload["max_rounds"] == 3
    assert payload["consensus_rule"] == {"mode": "exact-match", "spread": None}
    assert [p["id"] for p in payload["roster"]] == ["sm", "a", "b"]
    assert payload["last_sequence"] == welcome["sequence"] == 1


def test_connect_emits_joined_to_already_connected_peers():
    host = make_host()
    conn_a = host.connect(host.tokens["a"])
    drain(conn_a)
    host.connect(host.tokens["b"])
    live = frames_of(conn_a)
    assert [f["type"] for f in live] == ["joined"]
    assert live[0]["payload"]["participant"]["id"] == "b"
    assert live[0]["sender_id"] == "b"


def test_second_connection_for_a_participant_does_not_rejoin():
    host = make_host()
    first = host.connect(host.tokens["a"])
    drain(first)
    host.connect(host.tokens["a"])
    assert frames_of(first) == []
    assert host.engine.present_ids() == {"a"}


def test_backlog_starts_after_last_seen():
    host = make_host()
    host.connect(host.tokens["a"])
    host.connect(host.tokens["b"])
    assert host.engine.last_sequence == 2
    late = host.connect(host.tokens["sm"], last_seen=2)
    frames = frames_of(late)
    # welcome, own joined event (sequence 3), nothing older
    assert [f["type"] for f in frames] == ["welcome", "joined"]
    assert frames[1]["sequence"] == 3


def test_connect_rejects_bad_last_seen():
    host = make_host()
    with pytest.raises(ProtocolError, match="last_seen"):
        host.connect(host.tokens["a"], last_seen=-1)


# --------------------------------------------------------------- broadcast


def full_round_setup():
    """Facilitator plus two estimators connected, story presented."""
    host = make_host()
    conns = {pid: host.connect(host.tokens[pid]) for pid in ("sm", "a", "b")}
    send(host, conns["sm"], "present_story")
    for conn in conns.values():
        drain(conn)
    return host, conns


def test_estimate_value_visible_only_to_its_owner():
    host, conns = full_round_setup()
    send(host, conns["a"], "submit_estimate", {"points": 3})
    own = [f for f in frames_of(conns["a"]) if f["type"] == "estimate_submitted"]
    peer = [f for f in frames_of(conns["b"]) if f["type"] == "estimate_submitted"]
    assert own[0]["payload"]["points"] == "3"
    assert "points" not in peer[0]["payload"]
    assert peer[0]["payload"]["participant_id"] == "a"


def test_values_become_public_in_round_revealed():
    host, conns = full_round_setup()
    send(host, conns["a"], "submit_estimate", {"points": 3})
    send(host, conns["b"], "submit_estimate", {"points": 5})
    revealed = [f for f in frames_of(conns["a"]) if f["type"] == "round_revealed"]
    estimates = {
        e["participant_id"]: e["points"] for e in revealed[0]["payload"]["estimates"]
    }
    assert estimates == {"a": "3", "b": "5"}


def test_event_frames_arrive_in_sequence_order_per_connection():
    host, conns = full_round_setup()
    send(host, conns["a"], "submit_estimate", {"points": 3})
    send(host, conns["b"], "submit_estimate", {"points": 3})
    for conn in conns.values():
        sequences = [f["sequence"] for f in events_of(frames_of(conn))]
        assert sequences == sorted(sequences)
        assert len(set(sequences)) == len(sequences)


def test_sender_identity_is_stamped_not_trusted():
    host, conns = full_round_setup()
    # the payload cannot speak for someone else; identity comes from the token
    send(host, conns["a"], "chat", {"body": "hello", "sender_id": "b"})
    chat = [f for f in frames_of(conns["b"]) if f["type"] == "chat"][0]
    assert chat["sender_id"] == "a"
    assert chat["payload"]["sender_id"] == "a"


# ------------------------------------------------------------------ resync


def test_resync_zero_equals_connected_from_the_start():
    host, conns = full_round_setup()
    send(host, conns["a"], "submit_estimate", {"points": 3})
    send(host, conns["b"], "submit_estimate", {"points": 5})
    witness_events = events_of(frames_of(host.connect(host.tokens["b"], last_seen=0)))

    send(host, conns["b"], "resync", {"last_seen": 0})
    frames = frames_of(conns["b"])
    assert frames[-1]["type"] == "ack"
    replayed = events_of(frames)
    assert replayed == witness_events


def test_resync_resets_the_delivery_cursor():
    host, conns = full_round_setup()
    send(host, conns["a"], "submit_estimate", {"points": 3})
    last = host.engine.last_sequence
    send(host, conns["b"], "resync", {"last_seen": last})
    frames = frames_of(conns["b"])
    # queued backlog was dropped; only the ack remains
    assert [f["type"] for f in frames] == ["ack"]
    send(host, conns["a"], "chat", {"body": "still here"})
    assert [f["type"] for f in frames_of(conns["b"])] == ["chat"]


def test_resync_beyond_log_is_rejected_as_wrong_session():
    host, conns = full_round_setup()
    send(host, conns["b"], "resync", {"last_seen": 10_000})
    frames = frames_of(conns["b"])
    assert frames[-1]["type"] == "error"
    assert "wrong session" in frames[-1]["payload"]["message"]


def test_resync_with_non_integer_last_seen_is_a_protocol_error():
    host, conns = full_round_setup()
    with pytest.raises(ProtocolError, match="last_seen"):
        send(host, conns["b"], "resync", {"last_seen": "zero"})


# ---------------------------------------------------------------- dispatch


def test_engine_rejection_becomes_an_error_frame_and_connection_lives():
    host, conns = full_round_setup()
    send(host, conns["a"], "submit_estimate", {"points": 4, "command_id": "c1"})
    frames = frames_of(conns["a"])
    error = frames[-1]
    assert error["type"] == "error"
    assert error["payload"]["command_id"] == "c1"
    assert "not in the deck" in error["payload"]["message"]
    assert conns["a"].alive
    # no side effects: the round has no estimates
    assert host.engine.current_round().estimates == {}


def test_facilitator_cannot_estimate():
    host, conns = full_round_setup()
    send(host, conns["sm"], "submit_estimate", {"points": 3})
    error = frames_of(conns["sm"])[-1]
    assert error["type"] == "error"
    assert "facilitator" in error["payload"]["message"]


def test_ack_echoes_command_id_and_current_sequence():
    host, conns = full_round_setup()
    send(host, conns["a"], "chat", {"body": "hi", "command_id": "c7"})
    ack = frames_of(conns["a"])[-1]
    assert ack["type"] == "ack"
    assert ack["payload"] == {"status": "ok", "command_id": "c7"}
    assert ack["sequence"] == host.engine.last_sequence


def test_second_join_frame_is_a_protocol_error():
    host, conns = full_round_setup()
    with pytest.raises(ProtocolError, match="already joined"):
        host.dispatch(conns["a"], client_frame("join", {"token": "x"}))


def test_frame_for_another_session_is_a_protocol_error():
    host, conns = full_round_setup()
    frame = client_frame("chat", {"body": "hi"}, session_id="другая")
    with pytest.raises(ProtocolError, match="another session|joined to"):
        host.dispatch(conns["a"], frame)


def test_mark_absent_and_force_reveal_flow():
    host, conns = full_round_setup()
    send(host, conns["a"], "submit_estimate", {"points": 3})
    send(host, conns["sm"], "force_reveal", {})
    frames = frames_of(conns["a"])
    kinds = [f["type"] for f in events_of(frames)]
    assert "left" in kinds  # b excused
    assert "round_revealed" in kinds


def test_leave_command_acks_then_closes():
    host, conns = full_round_setup()
    send(host, conns["b"], "leave", {"command_id": "bye"})
    frames, closes = drain(conns["b"])
    assert frames[-1]["type"] == "ack"
    assert closes == [(CLOSE_NORMAL, "left")]
    assert "b" not in host.engine.present_ids()


def test_non_string_command_id_is_a_protocol_error():
    host, conns = full_round_setup()
    with pytest.raises(ProtocolError, match="command_id"):
        send(host, conns["a"], "chat", {"body": "x", "command_id": 7})


# -------------------------------------------------------------- disconnect


def test_disconnect_of_last_connection_emits_left():
    host, conns = full_round_setup()
    host.disconnect(conns["b"])
    left = [f for f in frames_of(conns["a"]) if f["type"] == "left"]
    assert left[0]["payload"] == {"participant_id": "b", "reason": "disconnected"}


def test_disconnect_with_another_tab_open_keeps_presence():
    host, conns = full_round_setup()
    second = host.connect(host.tokens["b"])
    drain(second)
    host.disconnect(conns["b"])
    assert "b" in host.engine.present_ids()
    assert [f for f in frames_of(conns["a"]) if f["type"] == "left"] == []


def test_close_all_marks_every_connection():
    host, conns = full_round_setup()
    host.close_all()
    for conn in conns.values():
        _, closes = drain(conn)
        assert closes and closes[0][0] == CLOSE_NORMAL


# ---------------------------------------------------------------- overflow


def test_slow_consumer_is_closed_with_overflow_code():
    host = make_host(buffer_limit=5)
    conn = host.connect(host.tokens["a"])
    talker = host.connect(host.tokens["b"])
    for i in range(10):
        send(host, talker, "chat", {"body": f"message {i}"})
    frames, closes = drain(conn)
    assert closes == [(CLOSE_OVERFLOW, "outbound buffer overflow")]
    assert len(frames) <= 5
    assert not conn.alive


def test_overflowed_connection_is_reaped_on_next_tick():
    host = make_host(buffer_limit=8)
    conn = host.connect(host.tokens["a"])
    talker = host.connect(host.tokens["b"])
    for i in range(6):
        send(host, talker, "chat", {"body": f"m{i}"})
        drain(talker)  # the talker keeps up; only `conn` stalls
    assert not conn.alive
    host.tick(now=0.0)
    left = [f for f in frames_of(talker) if f["type"] == "left"]
    assert left and left[0]["payload"]["participant_id"] == "a"


# --------------------------------------------------------------- heartbeat


def test_ticks_send_pings_and_pongs_keep_the_connection():
    host = make_host(clock=lambda: 100.0)
    conn = host.connect(host.tokens["a"])
    drain(conn)
    for _ in range(5):
        host.tick()
        frames, closes = drain(conn)
        assert [f["type"] for f in frames] == ["ping"]
        assert closes == []
        send(host, conn, "pong")
    assert conn.alive


def test_two_missed_pongs_expire_the_connection():
    host = make_host()
    conn_a = host.connect(host.tokens["a"])
    conn_b = host.connect(host.tokens["b"])
    drain(conn_a), drain(conn_b)
    host.tick(now=15.0)   # ping 1
    host.tick(now=30.0)   # ping 2, still no pong
    host.tick(now=45.0)   # two missed -> expire
    _, closes = drain(conn_a)
    assert (CLOSE_HEARTBEAT, "heartbeat lost") in closes
    left = [f for f in frames_of(conn_b) if f["type"] == "left"]
    assert left[0]["payload"]["participant_id"] == "a"
    assert "a" not in host.engine.present_ids()


def test_ponging_one_connection_does_not_save_another():
    host = make_host()
    conn_a = host.connect(host.tokens["a"])
    conn_b = host.connect(host.tokens["b"])
    for _ in range(3):
        host.tick()
        send(host, conn_b, "pong")
    assert not conn_a.alive
    assert conn_b.alive


# ------------------------------------------------------- auto facilitator


def test_auto_facilitator_presents_when_all_estimators_arrive():
    host = make_host()
    auto_facilitate(host)
    assert "sm" in host.engine.present_ids()
    host.connect(host.tokens["a"])
    assert host.engine.current_story() is None
    conn_b = host.connect(host.tokens["b"])
    assert host.engine.current_story().id == "S-1"
    kinds = [f["type"] for f in frames_of(conn_b)]
    assert kinds[-2:] == ["story_presented", "round_started"]


def test_auto_facilitator_prompts_once_then_advances_the_round():
    host = make_host()
    auto_facilitate(host)
    conn_a = host.connect(host.tokens["a"])
    conn_b = host.connect(host.tokens["b"])
    send(host, conn_a, "submit_estimate", {"points": 3})
    send(host, conn_b, "submit_estimate", {"points": 8})

    def prompts():
        return [
            f
            for f in frames_of(conn_a)
            if f["type"] == "chat" and f["payload"]["body"] == DISCUSSION_PROMPT
        ]

    assert len(prompts()) == 1  # spoken right after the reveal
    send(host, conn_a, "chat", {"body": "I think the migration dominates."})
    # one estimator spoke: round has not advanced yet
    assert host.engine.current_round().index == 1
    send(host, conn_b, "chat", {"body": "Agreed, plus the rollback path."})
    assert host.engine.current_round().index == 2
    assert prompts() == []  # never repeated for the same round


def test_auto_facilitator_chains_through_the_queue():
    host = make_host(max_rounds=1)
    auto_facilitate(host)
    conn_a = host.connect(host.tokens["a"])
    conn_b = host.connect(host.tokens["b"])
    for _ in ("S-1", "S-2"):
        send(host, conn_a, "submit_estimate", {"points": 3})
        send(host, conn_b, "submit_estimate", {"points": 3})
    results = host.engine.results()
    assert [r.story.id for r in results] == ["S-1", "S-2"]
    assert all(r.consensus for r in results)


def test_round_limit_fallback_finalizes_without_consensus():
    host = make_host(max_rounds=1, stories=("S-1",))
    auto_facilitate(host)
    conn_a = host.connect(host.tokens["a"])
    conn_b = host.connect(host.tokens["b"])
    send(host, conn_a, "submit_estimate", {"points": 2})
    send(host, conn_b, "submit_estimate", {"points": 5})
    result = host.engine.results()[0]
    assert result.consensus is False
    kinds = [f["type"] for f in events_of(frames_of(conn_a))]
    assert "round_limit_reached" in kinds and "story_finalized" in kinds
