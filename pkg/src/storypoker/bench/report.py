"""Evaluation reports: score prediction sets, compare estimator pairs, and
render the fixed-width per-project table plus a machine-readable record.

Comparisons pair two estimators' absolute errors by story id; pairs that are
degenerate (fewer than five nonzero differences, or no common stories) are
skipped and listed with a reason rather than given a made-up p-value.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from ..core import ValidationError
from ..events import canonical_json
from ..points import as_points, format_points
from .metrics import mae, mmre, pred_k
from .runner import PredictionSet
from .stats import a12, wilcoxon_signed_rank

MIN_PAIRED = 5


@dataclass(frozen=True)
class ReportRow:
    """One estimator's scores on one project."""

    project_code: str
    estimator: str
    n_scored: int
    n_excluded_zero_truth: int
    n_failed: int
    mae: Fraction
    mmre: Fraction
    pred: Fraction

    def __post_init__(self) -> None:
        if self.n_scored < 1:
            raise ValidationError("report row with no scored stories")
        if self.n_excluded_zero_truth < 0 or self.n_failed < 0:
            raise ValidationError("negative exclusion counts")
        for name in ("mae", "mmre", "pred"):
            value = as_points(getattr(self, name))
            object.__setattr__(self, name, value)
        if not 0 <= self.pred <= 1:
            raise ValidationError(f"pred out of [0,1]: {self.pred}")


@dataclass(frozen=True)
class Comparison:
    """Wilcoxon p and Vargha-Delaney effect size for one estimator pair."""

    project_code: str
    estimator_a: str
    estimator_b: str
    n_paired: int
    wilcoxon_p: float
    a12: Fraction

    def __post_init__(self) -> None:
        if not 0 < self.wilcoxon_p <= 1:
            raise ValidationError(f"p-value out of (0,1]: {self.wilcoxon_p}")
        value = as_points(self.a12)
        if not 0 <= value <= 1:
            raise ValidationError(f"a12 out of [0,1]: {value}")
        object.__setattr__(self, "a12", value)


@dataclass(frozen=True)
class EvalReport:
    rows: Tuple[ReportRow, ...]
    comparisons: Tuple[Comparison, ...] = ()
    skipped: Tuple[Tuple[str, str, str, str], ...] = ()  # (project, a, b, reason)
    settings: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if not self.rows:
            raise ValidationError("report with no rows")


def score_predictions(
    predictions: PredictionSet,
    k: Fraction = Fraction(1, 2),
    zero_policy: str = "exclude",
    epsilon: Optional[Fraction] = None,
) -> ReportRow:
    pairs = predictions.error_pairs()
    mmre_value, excluded = mmre(pairs, zero_policy=zero_policy, epsilon=epsilon)
    return ReportRow(
        project_code=predictions.project_code,
        estimator=predictions.estimator,
        n_scored=len(pairs),
        n_excluded_zero_truth=excluded,
        n_failed=len(predictions.failures),
        mae=mae(pairs),
        mmre=mmre_value,
        pred=pred_k(pairs, k=k, zero_policy=zero_policy, epsilon=epsilon),
    )


def compare_predictions(
    a: PredictionSet, b: PredictionSet, alternative: str = "two-sided"
) -> Comparison:
    """Pair the two estimators' absolute errors by story id, then test."""
    errors_a = a.absolute_errors_by_id()
    errors_b = b.absolute_errors_by_id()
    common = [sid for sid in errors_a if sid in errors_b]
    if len(common) < MIN_PAIRED:
        raise ValidationError(
            f"only {len(common)} stories scored by both estimators; need >= {MIN_PAIRED}"
        )
    sample_a = [errors_a[sid] for sid in common]
    sample_b = [errors_b[sid] for sid in common]
    return Comparison(
        project_code=a.project_code or b.project_code,
        estimator_a=a.estimator,
        estimator_b=b.estimator,
        n_paired=len(common),
        wilcoxon_p=wilcoxon_signed_rank(sample_a, sample_b, alternative=alternative),
        a12=a12(sample_a, sample_b),
    )


def build_report(
    prediction_sets: Sequence[PredictionSet],
    k: Fraction = Fraction(1, 2),
    zero_policy: str = "exclude",
    epsilon: Optional[Fraction] = None,
    alternative: str = "two-sided",
    settings: Sequence[Tuple[str, str]] = (),
) -> EvalReport:
    if not prediction_sets:
        raise ValidationError("no prediction sets to report on")
    rows = [score_predictions(ps, k=k, zero_policy=zero_policy, epsilon=epsilon) for ps in prediction_sets]

    by_project: Dict[str, List[PredictionSet]] = {}
    for ps in prediction_sets:
        by_project.setdefault(ps.project_code, []).append(ps)

    comparisons: List[Comparison] = []
    skipped: List[Tuple[str, str, str, str]] = []
    for project, group in by_project.items():
        for left, right in itertools.combinations(group, 2):
            try:
                comparisons.append(compare_predictions(left, right, alternative=alternative))
            except ValidationError as err:
                skipped.append((project, left.estimator, right.estimator, str(err)))
    return EvalReport(
        rows=tuple(rows),
        comparisons=tuple(comparisons),
        skipped=tuple(skipped),
        settings=tuple(settings),
    )


def format_p_value(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def _metric_cell(value: Fraction, best: Fraction) -> str:
    text = f"{float(value):.3f}"
    return "*" + text if value == best else text


def render_report(report: EvalReport) -> str:
    """Fixed-width table grouped by project; best value per metric per
    project is starred. Ends with the pairwise comparison block."""
    lines: List[str] = []
    for key, value in report.settings:
        lines.append(f"# {key} = {value}")
    if report.settings:
        lines.append("")

    by_project: Dict[str, List[ReportRow]] = {}
    for row in report.rows:
        by_project.setdefault(row.project_code, []).append(row)

    name_width = max(
        [len("Approach")] + [len(row.estimator) for row in report.rows]
    )
    proj_width = max([len("Proj")] + [len(p) for p in by_project])
    header = (
        f"{'Proj':<{proj_width}}  {'Approach':<{name_width}}  "
        f"{'MAE':>8}  {'MMRE':>8}  {'PRED(50)':>8}  {'Scored':>6}  {'Excl':>4}  {'Fail':>4}"
    )
    lines.append(header)
    lines.append("-" * len(header))
    for project, rows in by_project.items():
        best_mae = min(row.mae for row in rows)
        best_mmre = min(row.mmre for row in rows)
        best_pred = max(row.pred for row in rows)
        for row in rows:
            lines.append(
                f"{project:<{proj_width}}  {row.estimator:<{name_width}}  "
                f"{_metric_cell(row.mae, best_mae):>8}  "
                f"{_metric_cell(row.mmre, best_mmre):>8}  "
                f"{_metric_cell(row.pred, best_pred):>8}  "
                f"{row.n_scored:>6}  {row.n_excluded_zero_truth:>4}  {row.n_failed:>4}"
            )

    if report.comparisons or report.skipped:
        lines.append("")
        lines.append("Wilcoxon signed-rank over per-story absolute errors, A12 in brackets")
        for cmp in report.comparisons:
            label = f"{cmp.estimator_a} vs {cmp.estimator_b}"
            lines.append(
                f"{cmp.project_code:<{proj_width}}  {label}: "
                f"p={format_p_value(cmp.wilcoxon_p)} [{float(cmp.a12):.2f}] "
                f"(n={cmp.n_paired})"
            )
        for project, left, right, reason in report.skipped:
            lines.append(f"{project:<{proj_width}}  {left} vs {right}: skipped ({reason})")
    return "\n".join(lines) + "\n"


def to_record(report: EvalReport) -> dict:
    """JSON-ready form: exact metric strings plus float conveniences."""
    return {
        "settings": {key: value for key, value in report.settings},
        "rows": [
            {
                "project": row.project_code,
                "estimator": row.estimator,
                "n_scored": row.n_scored,
                "n_excluded_zero_truth": row.n_excluded_zero_truth,
                "n_failed": row.n_failed,
                "mae": format_points(row.mae),
                "mae_float": float(row.mae),
                "mmre": format_points(row.mmre),
                "mmre_float": float(row.mmre),
                "pred": format_points(row.pred),
                "pred_float": float(row.pred),
            }
            for row in report.rows
        ],
        "comparisons": [
            {
                "project": cmp.project_code,
                "a": cmp.estimator_a,
                "b": cmp.estimator_b,
                "n_paired": cmp.n_paired,
                "wilcoxon_p": cmp.wilcoxon_p,
                "a12": format_points(cmp.a12),
                "a12_float": float(cmp.a12),
            }
            for cmp in report.comparisons
        ],
        "skipped_comparisons": [
            {"project": project, "a": left, "b": right, "reason": reason}
            for project, left, right, reason in report.skipped
        ],
    }


def write_report(report: EvalReport, directory: Union[str, Path]) -> Tuple[Path, Path]:
    """report.txt (rendered table) and report.json (canonical record)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    text_path = directory / "report.txt"
    record_path = directory / "report.json"
    text_path.write_text(render_report(report), encoding="utf-8")
    record_path.write_text(canonical_json(to_record(report)) + "\n", encoding="utf-8")
    return text_path, record_path
