"""Benchmark corpus ingestion and splitting.

A corpus is a CSV of historical stories with known points (Jira-mined data:
one row per issue). All validation errors cite the offending data row.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Tuple, Union

from ..core import UserStory, ValidationError
from ..points import PointsError, as_points

SPLIT_ORDERS = ("as-is", "by-id")


@dataclass(frozen=True)
class ColumnMapping:
    """Names of the corpus columns; description is optional."""

    id: str = "issuekey"
    title: str = "title"
    points: str = "storypoint"
    description: Optional[str] = "description"


@dataclass(frozen=True)
class Corpus:
    """Labeled stories for one project; every story carries ground truth."""

    project_code: str
    stories: Tuple[UserStory, ...]
    source: str = ""

    def __post_init__(self) -> None:
        if not self.stories:
            raise ValidationError(f"corpus {self.project_code!r} is empty")
        seen = set()
        for story in self.stories:
            if story.ground_truth_points is None:
                raise ValidationError(
                    f"corpus {self.project_code!r}: story {story.id!r} has no ground truth"
                )
            if story.id in seen:
                raise ValidationError(
                    f"corpus {self.project_code!r}: duplicate story id {story.id!r}"
                )
            seen.add(story.id)
        object.__setattr__(self, "stories", tuple(self.stories))

    def __len__(self) -> int:
        return len(self.stories)


def load_corpus(
    path: Union[str, Path],
    mapping: ColumnMapping = ColumnMapping(),
    project_code: Optional[str] = None,
) -> Corpus:
    """Parse a comma-separated, quoted, header-rowed corpus file.

    Row numbers in errors count data rows from 1 (the header is row 0);
    quoted fields may span physical lines, so these are logical rows.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"corpus file {path} does not exist")
    code = project_code if project_code is not None else path.stem.upper()
    stories = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        required = [mapping.id, mapping.title, mapping.points]
        missing = [c for c in required if c not in header]
        if missing:
            raise ValidationError(
                f"{path}: missing column(s) {', '.join(repr(c) for c in missing)} "
                f"(header has {', '.join(repr(c) for c in header)})"
            )
        has_description = mapping.description is not None and mapping.description in header
        for row_number, row in enumerate(reader, start=1):
            raw_points = (row.get(mapping.points) or "").strip()
            try:
                points = as_points(raw_points)
            except PointsError as err:
                raise ValidationError(f"{path} row {row_number}: bad points: {err}") from err
            description = (row.get(mapping.description) or "") if has_description else ""
            try:
                stories.append(
                    UserStory(
                        id=(row.get(mapping.id) or "").strip(),
                        title=row.get(mapping.title) or "",
                        description=description if description.strip() else None,
                        ground_truth_points=points,
                    )
                )
            except ValidationError as err:
                raise ValidationError(f"{path} row {row_number}: {err}") from err
    if not stories:
        raise ValidationError(f"{path}: corpus has no data rows")
    try:
        return Corpus(project_code=code, stories=tuple(stories), source=str(path))
    except ValidationError as err:
        raise ValidationError(f"{path}: {err}") from err


def split_corpus(
    corpus: Corpus, train_fraction, order: str = "as-is"
) -> Tuple[Tuple[UserStory, ...], Tuple[UserStory, ...]]:
    """Deterministic order-preserving split into (train, test).

    Train size is floor(n * fraction), computed exactly so 0.6 of 414 is
    248 regardless of float representation. No shuffling: the default
    evaluation is chronological (file order).
    """
    if order not in SPLIT_ORDERS:
        raise ValidationError(f"order must be one of {SPLIT_ORDERS}, got {order!r}")
    try:
        fraction = (
            Fraction(str(train_fraction))
            if isinstance(train_fraction, float)
            else Fraction(train_fraction)
        )
    except (ValueError, ZeroDivisionError, TypeError) as err:
        raise ValidationError(f"bad train_fraction {train_fraction!r}: {err}") from err
    if not 0 < fraction < 1:
        raise ValidationError(f"train_fraction must be in (0, 1), got {train_fraction!r}")
    stories = list(corpus.stories)
    if order == "by-id":
        stories.sort(key=lambda s: s.id)
    cut = int(len(stories) * fraction)  # floor: both factors non-negative
    return tuple(stories[:cut]), tuple(stories[cut:])
