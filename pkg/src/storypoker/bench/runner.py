"""Batch prediction: drive a model binding over a test corpus with bounded
concurrency, a resumable JSONL checkpoint, and a CSV prediction format.

Parse failures and permanent HTTP errors are per-story data points; a
transport failure (binding unreachable after its own retries) aborts the run
with the checkpoint preserved, because every remaining call would fail too.
"""

from __future__ import annotations

import csv
import json
import statistics
import threading
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from ..core import UserStory, ValidationError
from ..events import canonical_json
from ..gateway.bindings import (
    GatewayError,
    ScriptUnderrunError,
    TransportError,
    complete,
)
from ..gateway.estimation import parse_estimate_reply, render_estimation_conversation
from ..points import PointsError, PointsLike, as_points, format_points

PREDICTIONS_HEADER = ("story_id", "truth", "prediction")


@dataclass(frozen=True)
class PredictionSet:
    """One estimator's predictions over one project's test stories."""

    estimator: str
    project_code: str
    pairs: Tuple[Tuple[str, Fraction, Fraction], ...]
    failures: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if not self.estimator.strip():
            raise ValidationError("estimator name must be nonempty")
        coerced = []
        seen = set()
        for story_id, truth, prediction in self.pairs:
            if not story_id:
                raise ValidationError("prediction pair with empty story id")
            if story_id in seen:
                raise ValidationError(f"duplicate prediction for story {story_id!r}")
            seen.add(story_id)
            coerced.append((story_id, as_points(truth), as_points(prediction)))
        object.__setattr__(self, "pairs", tuple(coerced))
        object.__setattr__(self, "failures", tuple(self.failures))

    def error_pairs(self) -> List[Tuple[Fraction, Fraction]]:
        return [(truth, prediction) for _, truth, prediction in self.pairs]

    def absolute_errors_by_id(self) -> Dict[str, Fraction]:
        return {sid: abs(truth - prediction) for sid, truth, prediction in self.pairs}


def _require_labeled_test(test: Sequence[UserStory]) -> None:
    if not test:
        raise ValidationError("test set is empty")
    seen = set()
    for story in test:
        if story.ground_truth_points is None:
            raise ValidationError(f"test story {story.id!r} has no ground truth")
        if story.id in seen:
            raise ValidationError(f"duplicate test story id {story.id!r}")
        seen.add(story.id)


def _read_checkpoint(path: Path, known_ids: set) -> Dict[str, dict]:
    records: Dict[str, dict] = {}
    if not path.exists():
        return records
    with path.open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise ValidationError(
                    f"checkpoint {path} line {line_number}: invalid JSON: {err}"
                ) from err
            if not isinstance(record, dict) or "story_id" not in record:
                raise ValidationError(
                    f"checkpoint {path} line {line_number}: expected a story record"
                )
            if record["story_id"] not in known_ids:
                raise ValidationError(
                    f"checkpoint {path} line {line_number}: unknown story "
                    f"{record['story_id']!r} (stale checkpoint for another corpus?)"
                )
            records[record["story_id"]] = record
    return records


def run_batch(
    binding,
    test: Sequence[UserStory],
    concurrency: int = 4,
    estimator: Optional[str] = None,
    project_code: str = "",
    checkpoint_path: Optional[Union[str, Path]] = None,
    include_description: bool = False,
) -> PredictionSet:
    """Predict every test story through `binding`; resumable and concurrent.

    Results are keyed by story id, so completion order never affects the
    output: pairs come back in test order.
    """
    _require_labeled_test(test)
    if concurrency < 1:
        raise ValidationError(f"concurrency must be >= 1, got {concurrency}")
    name = estimator or getattr(binding, "name", None) or "model"
    known_ids = {story.id for story in test}
    path = Path(checkpoint_path) if checkpoint_path is not None else None
    records = _read_checkpoint(path, known_ids) if path is not None else {}
    pending = [story for story in test if story.id not in records]

    write_lock = threading.Lock()
    handle = path.open("a", encoding="utf-8") if path is not None else None

    def note(record: dict) -> None:
        records[record["story_id"]] = record
        if handle is not None:
            with write_lock:
                handle.write(canonical_json(record) + "\n")
                handle.flush()

    def predict(story: UserStory) -> None:
        turns = render_estimation_conversation(story, include_description=include_description)
        try:
            reply = complete(binding, turns)
            points = parse_estimate_reply(reply)
        except (TransportError, ScriptUnderrunError):
            raise  # unreachable binding / exhausted script: abort the whole run
        except GatewayError as err:
            note({"story_id": story.id, "error": f"{type(err).__name__}: {err}"})
            return
        note({"story_id": story.id, "prediction": format_points(points)})

    try:
        if pending:
            pool = ThreadPoolExecutor(max_workers=concurrency)
            try:
                futures = [pool.submit(predict, story) for story in pending]
                done, _ = wait(futures, return_when=FIRST_EXCEPTION)
            finally:
                pool.shutdown(wait=True, cancel_futures=True)
            for future in done:
                future.result()  # re-raise TransportError if any
    finally:
        if handle is not None:
            handle.close()

    pairs = []
    failures = []
    for story in test:
        record = records[story.id]
        if "error" in record:
            failures.append((story.id, record["error"]))
        else:
            pairs.append((story.id, story.ground_truth_points, as_points(record["prediction"])))
    return PredictionSet(
        estimator=name, project_code=project_code, pairs=tuple(pairs), failures=tuple(failures)
    )


def train_median(train: Sequence[UserStory]) -> Fraction:
    """The constant-median baseline's single parameter."""
    labeled = [s.ground_truth_points for s in train if s.ground_truth_points is not None]
    if not labeled:
        raise ValidationError("cannot take a median of an unlabeled train set")
    return as_points(statistics.median(labeled))


def constant_predictions(
    test: Sequence[UserStory],
    value: PointsLike,
    estimator: str = "median-baseline",
    project_code: str = "",
) -> PredictionSet:
    """Predict the same value for every test story (the Table II baseline)."""
    _require_labeled_test(test)
    constant = as_points(value)
    return PredictionSet(
        estimator=estimator,
        project_code=project_code,
        pairs=tuple((s.id, s.ground_truth_points, constant) for s in test),
    )


def write_predictions(predictions: PredictionSet, path: Union[str, Path]) -> None:
    """CSV with the exact header story_id,truth,prediction; canonical point
    strings so a write-read cycle is the identity."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(PREDICTIONS_HEADER)
        for story_id, truth, prediction in predictions.pairs:
            writer.writerow([story_id, format_points(truth), format_points(prediction)])


def read_predictions(
    path: Union[str, Path], estimator: Optional[str] = None, project_code: str = ""
) -> PredictionSet:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"predictions file {path} does not exist")
    pairs = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != list(PREDICTIONS_HEADER):
            raise ValidationError(
                f"{path}: expected header {','.join(PREDICTIONS_HEADER)!r}, got {header!r}"
            )
        for row_number, row in enumerate(reader, start=1):
            if len(row) != 3:
                raise ValidationError(f"{path} row {row_number}: expected 3 fields, got {len(row)}")
            story_id, truth, prediction = row
            try:
                pairs.append((story_id, as_points(truth), as_points(prediction)))
            except PointsError as err:
                raise ValidationError(f"{path} row {row_number}: {err}") from err
    if not pairs:
        raise ValidationError(f"{path}: no prediction rows")
    try:
        return PredictionSet(
            estimator=estimator or path.stem,
            project_code=project_code,
            pairs=tuple(pairs),
        )
    except ValidationError as err:
        raise ValidationError(f"{path}: {err}") from err
