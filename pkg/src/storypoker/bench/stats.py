"""Paired statistics for approach comparison: exact Wilcoxon signed-rank
and the Vargha-Delaney A12 effect size.

The exact path enumerates the null distribution by dynamic programming over
doubled ranks (average ranks for ties are half-integers, so doubling keeps
everything in integers). scipy's wilcoxon silently leaves exact mode when
ties or zeros appear; this one does not.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import List, Sequence, Tuple

from ..core import ValidationError

ALTERNATIVES = ("two-sided", "greater", "less")

# largest n for which the exact null distribution is enumerated; 2^25 sign
# assignments collapse to a ~1300-entry DP table, so this is cheap
EXACT_LIMIT = 25


def _exact(value) -> Fraction:
    if isinstance(value, bool):
        raise ValidationError("boolean is not a sample value")
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            raise ValidationError(f"sample value {value!r} is not finite")
        return Fraction(str(value))
    return Fraction(value)


def _doubled_ranks(magnitudes: List[Fraction]) -> Tuple[List[int], List[int]]:
    """Average ranks of |d|, doubled to stay integral; also the tie group
    sizes for the variance correction."""
    order = sorted(range(len(magnitudes)), key=lambda i: magnitudes[i])
    doubled = [0] * len(magnitudes)
    tie_sizes = []
    start = 0
    while start < len(order):
        end = start
        while end + 1 < len(order) and magnitudes[order[end + 1]] == magnitudes[order[start]]:
            end += 1
        rank2 = (start + 1) + (end + 1)  # 2 * average rank of the group
        for position in range(start, end + 1):
            doubled[order[position]] = rank2
        tie_sizes.append(end - start + 1)
        start = end + 1
    return doubled, tie_sizes


def _exact_tail_probabilities(doubled: List[int], w2: int) -> Tuple[Fraction, Fraction]:
    """P(W2 <= w2) and P(W2 >= w2) under the null, exactly."""
    total = sum(doubled)
    counts = [0] * (total + 1)
    counts[0] = 1
    for rank2 in doubled:
        for s in range(total, rank2 - 1, -1):
            if counts[s - rank2]:
                counts[s] += counts[s - rank2]
    denominator = 2 ** len(doubled)
    lower = sum(counts[: w2 + 1])
    upper = sum(counts[w2:])
    return Fraction(lower, denominator), Fraction(upper, denominator)


def wilcoxon_signed_rank(
    a: Sequence, b: Sequence, alternative: str = "two-sided"
) -> float:
    """P-value of the paired signed-rank test of a against b.

    Zero differences are dropped; tied magnitudes get average ranks. Exact
    null distribution for n <= 25, normal approximation with continuity and
    tie corrections above. `alternative="greater"` tests a > b.
    """
    if alternative not in ALTERNATIVES:
        raise ValidationError(
            f"alternative must be one of {ALTERNATIVES}, got {alternative!r}"
        )
    if len(a) != len(b):
        raise ValidationError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    differences = [_exact(x) - _exact(y) for x, y in zip(a, b)]
    nonzero = [d for d in differences if d != 0]
    n = len(nonzero)
    if n < 5:
        raise ValidationError(
            f"too few nonzero differences for a signed-rank test: {n} (need >= 5)"
        )
    doubled, tie_sizes = _doubled_ranks([abs(d) for d in nonzero])
    w2 = sum(rank2 for rank2, d in zip(doubled, nonzero) if d > 0)

    if n <= EXACT_LIMIT:
        lower, upper = _exact_tail_probabilities(doubled, w2)
        if alternative == "greater":
            p = upper
        elif alternative == "less":
            p = lower
        else:
            p = min(Fraction(1), 2 * min(lower, upper))
        return float(p)

    mean = Fraction(n * (n + 1), 4)
    variance = Fraction(n * (n + 1) * (2 * n + 1), 24) - Fraction(
        sum(t**3 - t for t in tie_sizes), 48
    )
    sd = math.sqrt(variance)
    w = Fraction(w2, 2)
    if alternative == "greater":
        z = (float(w - mean) - 0.5) / sd
        return 0.5 * math.erfc(z / math.sqrt(2))
    if alternative == "less":
        z = (float(w - mean) + 0.5) / sd
        return 0.5 * math.erfc(-z / math.sqrt(2))
    distance = max(abs(float(w - mean)) - 0.5, 0.0)
    return min(1.0, math.erfc(distance / sd / math.sqrt(2)))


def a12(a: Sequence, b: Sequence) -> Fraction:
    """Vargha-Delaney effect size: probability that a random draw from `a`
    exceeds one from `b`, ties counted half. Direct pairwise comparison."""
    if not a or not b:
        raise ValidationError("a12 needs two nonempty samples")
    left = [_exact(x) for x in a]
    right = [_exact(y) for y in b]
    wins = 0
    ties = 0
    for x in left:
        for y in right:
            if x > y:
                wins += 1
            elif x == y:
                ties += 1
    return Fraction(2 * wins + ties, 2 * len(left) * len(right))
