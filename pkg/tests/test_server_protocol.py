"""Wire frame schema, parsing, and the redaction rule."""

import json

import pytest

from storypoker.events import EventKind, SessionEvent, canonical_json
from storypoker.server import (
    WIRE_VERSION,
    ProtocolError,
    WireMessage,
    ack_frame,
    check_client_frame,
    client_frame,
    control_frame,
    error_frame,
    event_frame,
    parse_frame,
    redacted_event_payload,
)


def submit_event(seq=7, pid="dev-1", points="5"):
    return SessionEvent(
        sequence=seq,
        kind=EventKind.ESTIMATE_SUBMITTED,
        payload={"participant_id": pid, "round_index": 1, "points": points},
    )


# ------------------------------------------------------------- frame schema


def test_server_frame_serializes_canonically():
    msg = WireMessage(
        type="chat",
        payload={"body": "hi", "sender_id": "a", "round_index": 1},
        session_id="s1",
        sender_id="a",
        sequence=4,
    )
    text = msg.to_json()
    assert text == canonical_json(json.loads(text))
    assert json.loads(text)["v"] == WIRE_VERSION


def test_round_trip_preserves_every_field():
    msg = WireMessage(
        type="round_started",
        payload={"index": 2, "story_id": "S-1", "required": ["a", "b"]},
        session_id="s1",
        sender_id="server",
        sequence=9,
    )
    assert parse_frame(msg.to_json()) == msg


def test_client_frame_omits_identity_fields():
    record = json.loads(client_frame("chat", {"body": "hi"}).to_json())
    assert "sender_id" not in record
    assert "sequence" not in record


def test_parse_rejects_non_json():
    with pytest.raises(ProtocolError, match="not valid JSON"):
        parse_frame("{nope")


def test_parse_rejects_non_object():
    with pytest.raises(ProtocolError, match="JSON object"):
        parse_frame("[1, 2]")


def test_parse_rejects_wrong_version():
    with pytest.raises(ProtocolError, match="wire version"):
        parse_frame('{"v": 2, "type": "chat", "payload": {}}')


def test_parse_rejects_missing_version():
    with pytest.raises(ProtocolError, match="wire version"):
        parse_frame('{"type": "chat", "payload": {}}')


def test_parse_rejects_unknown_fields():
    with pytest.raises(ProtocolError, match="unknown frame fields: extra"):
        parse_frame('{"v": 1, "type": "chat", "payload": {}, "extra": 1}')


def test_parse_rejects_blank_type():
    with pytest.raises(ProtocolError, match="type"):
        parse_frame('{"v": 1, "payload": {}}')


def test_parse_rejects_negative_sequence():
    with pytest.raises(ProtocolError, match="sequence"):
        parse_frame('{"v": 1, "type": "ack", "payload": {}, "sequence": -1}')


def test_check_client_frame_rejects_server_types():
    with pytest.raises(ProtocolError, match="unknown client frame type"):
        check_client_frame(WireMessage(type="round_revealed"))


def test_check_client_frame_rejects_sequence():
    msg = WireMessage(type="chat", payload={"body": "x"}, sequence=3)
    with pytest.raises(ProtocolError, match="must not carry a sequence"):
        check_client_frame(msg)


# --------------------------------------------------------------- redaction


def test_estimate_payload_redacted_for_non_owner():
    payload = redacted_event_payload(submit_event(), viewer_id="other")
    assert payload == {"participant_id": "dev-1", "round_index": 1}


def test_estimate_payload_kept_for_owner():
    payload = redacted_event_payload(submit_event(), viewer_id="dev-1")
    assert payload["points"] == "5"


def test_redaction_does_not_mutate_the_event():
    event = submit_event()
    redacted_event_payload(event, viewer_id="other")
    assert event.payload["points"] == "5"


def test_other_event_kinds_pass_through():
    event = SessionEvent(
        sequence=3,
        kind=EventKind.ROUND_REVEALED,
        payload={"estimates": [{"participant_id": "a", "points": "3", "submitted_at": 2}]},
    )
    assert redacted_event_payload(event, "other") == event.payload


def test_event_frame_attributes_sender():
    frame = event_frame("s1", submit_event(pid="dev-2"), viewer_id="dev-2")
    assert frame.sender_id == "dev-2"
    assert frame.sequence == 7
    assert frame.session_id == "s1"


def test_event_frame_join_sender_is_the_joiner():
    event = SessionEvent(
        sequence=1,
        kind=EventKind.JOINED,
        payload={"participant": {"id": "a", "display_name": "Ann", "kind": "human", "role_label": None}},
    )
    assert event_frame("s1", event, None).sender_id == "a"


def test_event_frame_system_events_come_from_server():
    event = SessionEvent(
        sequence=2,
        kind=EventKind.ROUND_STARTED,
        payload={"story_id": "S-1", "index": 1, "required": []},
    )
    assert event_frame("s1", event, None).sender_id == "server"


# ----------------------------------------------------------- control frames


def test_control_frames_are_stamped():
    for frame in (
        control_frame("welcome", "s1", 12, {"x": 1}),
        ack_frame("s1", 12, "cmd-1"),
        error_frame("s1", 12, "rejected", "nope", "cmd-1"),
    ):
        assert frame.session_id == "s1"
        assert frame.sequence == 12
        assert frame.sender_id == "server"


def test_ack_without_command_id_omits_it():
    assert "command_id" not in ack_frame("s1", 1, None).payload


def test_error_frame_carries_code_and_message():
    frame = error_frame("s1", 3, "rejected", "estimate 4 is not in the deck", "c9")
    assert frame.payload == {
        "code": "rejected",
        "message": "estimate 4 is not in the deck",
        "command_id": "c9",
    }
