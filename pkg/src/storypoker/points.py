"""Exact story-point arithmetic.

Points are `fractions.Fraction` everywhere in the package so half-point
stories compare exactly; binary floats never enter comparisons. The wire,
event-log, and export formats carry points as canonical strings produced
by :func:`format_points` and read back by :func:`parse_points`.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Union

PointsLike = Union[int, float, str, Fraction]


class PointsError(ValueError):
    """A value cannot be interpreted as a non-negative story-point amount."""


def as_points(value: PointsLike) -> Fraction:
    """Coerce a user-supplied number into a non-negative Fraction.

    Floats are routed through their shortest decimal repr, so 0.5 becomes
    exactly 1/2 rather than its binary expansion.
    """
    if isinstance(value, bool):
        raise PointsError(f"not a point value: {value!r}")
    if isinstance(value, Fraction):
        points = value
    elif isinstance(value, int):
        points = Fraction(value)
    elif isinstance(value, float):
        if not math.isfinite(value):
            raise PointsError(f"points must be finite, got {value!r}")
        points = Fraction(str(value))
    elif isinstance(value, str):
        try:
            points = Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise PointsError(f"not a point value: {value!r}") from exc
    else:
        raise PointsError(f"not a point value: {value!r}")
    if points < 0:
        raise PointsError(f"points must be non-negative, got {value!r}")
    return points


def format_points(value: PointsLike) -> str:
    """Render points minimally: "3" not "3.0", "0.5" not "0.50".

    Rationals without a finite decimal expansion fall back to "n/d".
    """
    points = as_points(value)
    if points.denominator == 1:
        return str(points.numerator)
    rest = points.denominator
    twos = fives = 0
    while rest % 2 == 0:
        rest //= 2
        twos += 1
    while rest % 5 == 0:
        rest //= 5
        fives += 1
    if rest != 1:
        return f"{points.numerator}/{points.denominator}"
    digits = max(twos, fives)
    scaled = points.numerator * 10**digits // points.denominator
    text = str(scaled).rjust(digits + 1, "0")
    return f"{text[:-digits]}.{text[-digits:]}"


def parse_points(text: str) -> Fraction:
    """Inverse of :func:`format_points`; also accepts plain "n/d" and decimals."""
    return as_points(text)
