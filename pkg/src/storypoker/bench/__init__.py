"""Benchmark harness: corpus loading, estimation metrics, paired statistics,
batch prediction runs, and report rendering."""

from .corpus import SPLIT_ORDERS, ColumnMapping, Corpus, load_corpus, split_corpus
from .metrics import ZERO_POLICIES, mae, mmre, pred_k
from .report import (
    Comparison,
    EvalReport,
    ReportRow,
    build_report,
    compare_predictions,
    render_report,
    score_predictions,
    to_record,
    write_report,
)
from .runner import (
    PREDICTIONS_HEADER,
    PredictionSet,
    constant_predictions,
    read_predictions,
    run_batch,
    train_median,
    write_predictions,
)
from .stats import ALTERNATIVES, a12, wilcoxon_signed_rank

__all__ = [
    "ALTERNATIVES",
    "ColumnMapping",
    "Comparison",
    "Corpus",
    "EvalReport",
    "PREDICTIONS_HEADER",
    "PredictionSet",
    "ReportRow",
    "SPLIT_ORDERS",
    "ZERO_POLICIES",
    "a12",
    "build_report",
    "compare_predictions",
    "constant_predictions",
    "load_corpus",
    "mae",
    "mmre",
    "pred_k",
    "read_predictions",
    "render_report",
    "run_batch",
    "score_predictions",
    "split_corpus",
    "to_record",
    "train_median",
    "wilcoxon_signed_rank",
    "write_predictions",
    "write_report",
]
