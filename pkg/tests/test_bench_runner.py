"""Batch prediction runs: scripted bindings, checkpoint resume, transport
aborts, and the prediction CSV round trip."""

import threading
from fractions import Fraction
from pathlib import Path

import pytest

from storypoker import UserStory, ValidationError
from storypoker.bench import (
    PredictionSet,
    constant_predictions,
    load_corpus,
    mae,
    mmre,
    pred_k,
    read_predictions,
    run_batch,
    train_median,
    write_predictions,
)
from storypoker.gateway import (
    ScriptUnderrunError,
    ScriptedBinding,
    TransportError,
    render_estimate_reply,
)

DATA = Path(__file__).parent / "data"


def stories(*points):
    # Trailing period keeps titles from being prefixes of each other, since
    # the scripted binding matches them by containment.
    return tuple(
        UserStory(id=f"S-{i}", title=f"Story number {i}.", ground_truth_points=p)
        for i, p in enumerate(points)
    )


def truth_binding(test, offset=0, name="scripted-truth"):
    """Replies with each story's ground truth (plus offset), keyed by title."""
    table = {s.title: s.ground_truth_points + offset for s in test}

    def reply(user_turn):
        for title, points in table.items():
            if title in user_turn:
                return render_estimate_reply(points)
        raise AssertionError(f"no scripted story matches: {user_turn[:60]!r}")

    return ScriptedBinding(name, reply_fn=reply)


class DyingBinding:
    """Succeeds for the first few calls, then loses the network for good."""

    name = "dying"

    def __init__(self, test, survive):
        self._inner = truth_binding(test)
        self._survive = survive
        self._lock = threading.Lock()
        self.calls = 0

    def complete(self, turns):
        with self._lock:
            self.calls += 1
            if self.calls > self._survive:
                raise TransportError("connection refused")
            return self._inner.complete(turns)


class TestRunBatch:
    def test_ground_truth_binding_scores_perfectly(self):
        test = stories(2, 3, 5, 8, 1, 13)
        result = run_batch(truth_binding(test), test)
        pairs = result.error_pairs()
        assert mae(pairs) == 0
        assert mmre(pairs) == (0, 0)
        assert pred_k(pairs) == 1
        assert result.failures == ()

    def test_offset_binding_has_unit_mae(self):
        test = stories(2, 3, 5, 8)
        result = run_batch(truth_binding(test, offset=1), test)
        assert mae(result.error_pairs()) == 1

    def test_results_in_test_order_despite_concurrency(self):
        test = stories(*(1 + i % 8 for i in range(24)))
        result = run_batch(truth_binding(test), test, concurrency=6)
        assert [sid for sid, _, _ in result.pairs] == [s.id for s in test]

    def test_estimator_defaults_to_binding_name(self):
        test = stories(1, 2, 3)
        assert run_batch(truth_binding(test), test).estimator == "scripted-truth"
        assert run_batch(truth_binding(test), test, estimator="x").estimator == "x"

    def test_unparseable_reply_is_a_recorded_failure(self):
        test = stories(2, 3, 5)
        binding = ScriptedBinding(
            "m",
            replies=[
                render_estimate_reply(2),
                "I cannot possibly say.",
                render_estimate_reply(5),
            ],
        )
        result = run_batch(binding, test, concurrency=1)
        assert [sid for sid, _, _ in result.pairs] == ["S-0", "S-2"]
        assert len(result.failures) == 1
        assert result.failures[0][0] == "S-1"
        assert "EstimateParseError" in result.failures[0][1]

    def test_empty_test_set_rejected(self):
        with pytest.raises(ValidationError, match="empty"):
            run_batch(ScriptedBinding("m", replies=[]), ())

    def test_unlabeled_story_rejected(self):
        test = (UserStory(id="S-0", title="No label"),)
        with pytest.raises(ValidationError, match="ground truth"):
            run_batch(ScriptedBinding("m", replies=[]), test)

    def test_bad_concurrency_rejected(self):
        test = stories(1)
        with pytest.raises(ValidationError, match="concurrency"):
            run_batch(ScriptedBinding("m", replies=[]), test, concurrency=0)

    def test_script_underrun_propagates(self):
        test = stories(1, 2)
        binding = ScriptedBinding("m", replies=[render_estimate_reply(1)])
        with pytest.raises(ScriptUnderrunError):
            run_batch(binding, test, concurrency=1)


class TestCheckpoint:
    def test_transport_failure_aborts_and_preserves_progress(self, tmp_path):
        test = stories(1, 2, 3, 5, 8, 13, 2, 3)
        checkpoint = tmp_path / "run.jsonl"
        binding = DyingBinding(test, survive=3)
        with pytest.raises(TransportError):
            run_batch(binding, test, concurrency=1, checkpoint_path=checkpoint)
        lines = checkpoint.read_text().strip().splitlines()
        assert len(lines) == 3

        resumed = run_batch(truth_binding(test), test, concurrency=1, checkpoint_path=checkpoint)
        assert len(resumed.pairs) == 8
        assert mae(resumed.error_pairs()) == 0

    def test_resume_skips_completed_stories(self, tmp_path):
        test = stories(1, 2, 3, 5)
        checkpoint = tmp_path / "run.jsonl"
        run_batch(truth_binding(test), test, checkpoint_path=checkpoint)
        # Second pass must not call the model at all: an empty script would
        # underrun on the first call.
        rerun = run_batch(
            ScriptedBinding("m", replies=[]), test, checkpoint_path=checkpoint
        )
        assert len(rerun.pairs) == 4
        assert mae(rerun.error_pairs()) == 0

    def test_failures_are_checkpointed_too(self, tmp_path):
        test = stories(2, 3)
        checkpoint = tmp_path / "run.jsonl"
        binding = ScriptedBinding("m", replies=[render_estimate_reply(2), "no idea"])
        first = run_batch(binding, test, concurrency=1, checkpoint_path=checkpoint)
        assert len(first.failures) == 1
        rerun = run_batch(
            ScriptedBinding("m", replies=[]), test, checkpoint_path=checkpoint
        )
        assert [sid for sid, _ in rerun.failures] == ["S-1"]

    def test_stale_checkpoint_for_other_corpus_rejected(self, tmp_path):
        test = stories(1, 2)
        checkpoint = tmp_path / "run.jsonl"
        checkpoint.write_text('{"prediction":"3","story_id":"GHOST-9"}\n')
        with pytest.raises(ValidationError, match="GHOST-9"):
            run_batch(truth_binding(test), test, checkpoint_path=checkpoint)

    def test_corrupt_checkpoint_line_cited(self, tmp_path):
        test = stories(1, 2)
        checkpoint = tmp_path / "run.jsonl"
        checkpoint.write_text('{"prediction":"3","story_id":"S-0"}\nnot json\n')
        with pytest.raises(ValidationError, match="line 2"):
            run_batch(truth_binding(test), test, checkpoint_path=checkpoint)


class TestBaseline:
    def test_train_median_odd(self):
        train = stories(1, 8, 3)
        assert train_median(train) == 3

    def test_train_median_even_is_midpoint(self):
        train = stories(2, 3, 5, 2)
        assert train_median(train) == Fraction(5, 2)

    def test_train_median_needs_labels(self):
        with pytest.raises(ValidationError):
            train_median((UserStory(id="S-0", title="No label"),))

    def test_constant_predictions(self):
        test = stories(2, 3, 5)
        baseline = constant_predictions(test, 3)
        assert baseline.estimator == "median-baseline"
        assert all(prediction == 3 for _, _, prediction in baseline.pairs)
        assert mae(baseline.error_pairs()) == 1  # (1 + 0 + 2) / 3


class TestPredictionSetType:
    def test_duplicate_story_ids_rejected(self):
        with pytest.raises(ValidationError, match="duplicate"):
            PredictionSet(
                estimator="m",
                project_code="X",
                pairs=(("S-1", Fraction(2), Fraction(3)), ("S-1", Fraction(2), Fraction(3))),
            )

    def test_blank_estimator_rejected(self):
        with pytest.raises(ValidationError, match="estimator"):
            PredictionSet(estimator="  ", project_code="X", pairs=())

    def test_negative_prediction_rejected(self):
        with pytest.raises(Exception):
            PredictionSet(
                estimator="m", project_code="X", pairs=(("S-1", Fraction(2), Fraction(-3)),)
            )

    def test_absolute_errors_by_id(self):
        ps = PredictionSet(
            estimator="m",
            project_code="X",
            pairs=(("S-1", Fraction(2), Fraction(5)), ("S-2", Fraction(4), Fraction(1))),
        )
        assert ps.absolute_errors_by_id() == {"S-1": 3, "S-2": 3}


class TestPredictionsFile:
    def test_round_trip_is_identity(self, tmp_path):
        original = PredictionSet(
            estimator="m",
            project_code="X",
            pairs=(
                ("S-1", Fraction(2), Fraction(1, 2)),
                ("S-2", Fraction(7, 3), Fraction(3)),
                ("S-3", Fraction(0), Fraction(1)),
            ),
        )
        path = tmp_path / "predictions-m.csv"
        write_predictions(original, path)
        loaded = read_predictions(path)
        assert loaded.pairs == original.pairs
        assert loaded.estimator == "predictions-m"

    def test_header_is_exact(self, tmp_path):
        path = tmp_path / "p.csv"
        write_predictions(
            PredictionSet(estimator="m", project_code="X", pairs=(("S-1", Fraction(2), Fraction(3)),)),
            path,
        )
        assert path.read_text().splitlines()[0] == "story_id,truth,prediction"

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("id,y,yhat\nS-1,2,3\n")
        with pytest.raises(ValidationError, match="header"):
            read_predictions(path)

    def test_short_row_cited(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("story_id,truth,prediction\nS-1,2,3\nS-2,4\n")
        with pytest.raises(ValidationError, match="row 2"):
            read_predictions(path)

    def test_bad_number_cited(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("story_id,truth,prediction\nS-1,two,3\n")
        with pytest.raises(ValidationError, match="row 1"):
            read_predictions(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("story_id,truth,prediction\n")
        with pytest.raises(ValidationError, match="no prediction rows"):
            read_predictions(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="does not exist"):
            read_predictions(tmp_path / "nope.csv")


class TestFixtureEndToEnd:
    def test_usergrid_truth_run_is_perfect(self):
        # Synthetic titles can repeat across the fixture; keep one story per
        # title so the title-keyed script is unambiguous.
        corpus = load_corpus(DATA / "usergrid.csv")
        seen = set()
        unique = [s for s in corpus.stories if not (s.title in seen or seen.add(s.title))]
        test = tuple(unique[:40])
        result = run_batch(truth_binding(test), test, concurrency=4)
        assert len(result.pairs) == len(test) == 40
        assert mae(result.error_pairs()) == 0
        assert pred_k(result.error_pairs()) == 1
