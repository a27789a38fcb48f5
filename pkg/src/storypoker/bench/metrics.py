"""Accuracy metrics over (truth, prediction) pairs, exact rationals end to
end: MAE, MMRE, and PRED(k).

MMRE and PRED divide by the ground truth, which real corpora set to zero for
some stories. The default policy excludes those pairs and reports how many;
the alternative substitutes max(y, epsilon) as the denominator.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, List, Sequence, Tuple

from ..core import ValidationError
from ..points import PointsLike, as_points

ZERO_POLICIES = ("exclude", "epsilon")

ErrorPair = Tuple[Fraction, Fraction]


def _coerce(pairs: Iterable[Sequence[PointsLike]]) -> List[ErrorPair]:
    out = []
    for index, pair in enumerate(pairs):
        if len(pair) != 2:
            raise ValidationError(
                f"pair {index}: expected (truth, prediction), got {len(pair)} values"
            )
        truth, prediction = pair
        out.append((as_points(truth), as_points(prediction)))
    return out


def mae(pairs: Iterable[Sequence[PointsLike]]) -> Fraction:
    """Mean absolute error, (1/n) * sum(|y - yhat|)."""
    coerced = _coerce(pairs)
    if not coerced:
        raise ValidationError("mae needs at least one pair")
    return sum(abs(y - yhat) for y, yhat in coerced) / Fraction(len(coerced))


def _relative_errors(
    pairs: Iterable[Sequence[PointsLike]], zero_policy: str, epsilon
) -> Tuple[List[Fraction], int]:
    """Per-pair |y - yhat| / denominator after the zero-truth policy."""
    if zero_policy not in ZERO_POLICIES:
        raise ValidationError(f"zero_policy must be one of {ZERO_POLICIES}, got {zero_policy!r}")
    coerced = _coerce(pairs)
    if not coerced:
        raise ValidationError("need at least one pair")
    if zero_policy == "epsilon":
        eps = as_points(epsilon if epsilon is not None else Fraction(1, 2))
        if eps <= 0:
            raise ValidationError(f"epsilon must be positive, got {epsilon!r}")
        return [abs(y - yhat) / max(y, eps) for y, yhat in coerced], 0
    scored = [(y, yhat) for y, yhat in coerced if y > 0]
    excluded = len(coerced) - len(scored)
    if not scored:
        raise ValidationError(
            f"all {len(coerced)} pairs have zero ground truth; nothing to score"
        )
    return [abs(y - yhat) / y for y, yhat in scored], excluded


def mmre(
    pairs: Iterable[Sequence[PointsLike]],
    zero_policy: str = "exclude",
    epsilon: PointsLike = None,
) -> Tuple[Fraction, int]:
    """Mean magnitude of relative error, plus how many pairs the zero-truth
    policy excluded."""
    errors, excluded = _relative_errors(pairs, zero_policy, epsilon)
    return sum(errors) / Fraction(len(errors)), excluded


def pred_k(
    pairs: Iterable[Sequence[PointsLike]],
    k: PointsLike = Fraction(1, 2),
    zero_policy: str = "exclude",
    epsilon: PointsLike = None,
) -> Fraction:
    """Fraction of scored pairs whose relative error is <= k (boundary
    inclusive)."""
    threshold = as_points(k)
    errors, _ = _relative_errors(pairs, zero_policy, epsilon)
    return Fraction(sum(1 for e in errors if e <= threshold), len(errors))
