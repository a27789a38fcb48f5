import json

import pytest

from storypoker import UserStory, ValidationError
from storypoker.gateway import (
    ChatTurn,
    export_finetune_dataset,
    read_finetune_dataset,
    render_estimate_reply,
    render_estimation_conversation,
)

CORPUS = [
    UserStory(id="a", title="Add login page", ground_truth_points=3),
    UserStory(id="b", title="Fix flaky sync", description="Happens under load.", ground_truth_points=0.5),
    UserStory(id="c", title="Migrate billing états", ground_truth_points=8),
]


def test_export_counts_and_round_trips(tmp_path):
    path = tmp_path / "train.jsonl"
    assert export_finetune_dataset(CORPUS, path) == 3
    records = read_finetune_dataset(path)
    assert [r.story_id for r in records] == ["a", "b", "c"]
    for story, record in zip(CORPUS, records):
        expected = render_estimation_conversation(story, include_description=False)
        expected.append(
            ChatTurn(role="assistant", content=render_estimate_reply(story.ground_truth_points))
        )
        assert list(record.turns) == expected
        assert record.points == story.ground_truth_points


def test_half_point_renders_as_decimal(tmp_path):
    path = tmp_path / "train.jsonl"
    export_finetune_dataset([CORPUS[1]], path)
    record = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert record["messages"][2]["content"] == "My estimated story point is: 0.5"
    assert "0.50" not in record["messages"][2]["content"]


def test_integer_points_have_no_trailing_zero(tmp_path):
    path = tmp_path / "train.jsonl"
    export_finetune_dataset([(CORPUS[0], 3.0)], path)
    line = path.read_text(encoding="utf-8").splitlines()[0]
    assert "My estimated story point is: 3" in line
    assert "3.0" not in line


def test_unlabeled_story_is_named(tmp_path):
    unlabeled = UserStory(id="nolabel", title="Mystery work")
    with pytest.raises(ValidationError, match="nolabel"):
        export_finetune_dataset([CORPUS[0], unlabeled], tmp_path / "train.jsonl")


def test_explicit_pairs_override_story_labels(tmp_path):
    path = tmp_path / "train.jsonl"
    export_finetune_dataset([(CORPUS[0], 13)], path)
    assert read_finetune_dataset(path)[0].points == 13


def test_description_flag_changes_user_turn(tmp_path):
    path = tmp_path / "train.jsonl"
    export_finetune_dataset([CORPUS[1]], path, include_description=True)
    record = read_finetune_dataset(path)[0]
    assert record.turns[1].content == "### Summary:\nFix flaky sync\n\nHappens under load."


def test_unicode_survives_the_file(tmp_path):
    path = tmp_path / "train.jsonl"
    export_finetune_dataset([CORPUS[2]], path)
    assert "états" in path.read_text(encoding="utf-8")
    assert read_finetune_dataset(path)[0].turns[1].content.endswith("Migrate billing états")


def test_reader_rejects_wrong_shapes(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        json.dumps({"story_id": "x", "messages": [{"role": "user", "content": "hi"}]}) + "\n",
        encoding="utf-8",
    )
    with pytest.raises(ValidationError, match="system/user/assistant"):
        read_finetune_dataset(path)
