"""Lexical similarity for in-context example selection.

Term-frequency cosine over lowercased, punctuation-stripped tokens of
title + description. Ranking uses the squared cosine as an exact Fraction
(monotone in cosine, since dot products of count vectors are non-negative),
so ordering never depends on float rounding and ties are bit-reproducible.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from fractions import Fraction
from typing import List, Sequence, Tuple

from ..core import UserStory, ValidationError
from ..points import PointsLike

_TOKEN = re.compile(r"[a-z0-9]+")

Example = Tuple[UserStory, PointsLike]


def tokenize(text: str) -> List[str]:
    return _TOKEN.findall(text.lower())


def story_terms(story: UserStory) -> Counter:
    return Counter(tokenize(story.title + " " + (story.description or "")))


def similarity_squared(a: UserStory, b: UserStory) -> Fraction:
    """cos^2 of the TF vectors, exact. 0 when either story has no tokens."""
    va, vb = story_terms(a), story_terms(b)
    dot = sum(va[t] * vb[t] for t in va if t in vb)
    if dot == 0:
        return Fraction(0)
    na = sum(v * v for v in va.values())
    nb = sum(v * v for v in vb.values())
    return Fraction(dot * dot, na * nb)


def lexical_similarity(a: UserStory, b: UserStory) -> float:
    """The cosine itself, for display and logging."""
    return math.sqrt(similarity_squared(a, b))


def select_examples(story: UserStory, corpus: Sequence[Example], k: int) -> List[Example]:
    """Top-k corpus items by descending similarity to `story`.

    Ties keep corpus order (stable sort); k = 0 yields nothing.
    """
    if k < 0:
        raise ValidationError(f"k must be >= 0, got {k}")
    if k == 0:
        return []
    ranked = sorted(
        corpus,
        key=lambda item: similarity_squared(story, item[0]),
        reverse=True,
    )
    return list(ranked[: min(k, len(ranked))])
