"""`bench`: corpus benchmarking from the command line.

    bench run --corpus mesos.csv --binding gpt-main --bindings bindings.json \
        --split 0.6 --out results/
    bench score --predictions results/predictions-gpt-main.csv
    bench compare --a results/predictions-gpt-main.csv --b baseline.csv
    bench export-finetune --corpus mesos.csv --out mesos.jsonl

`run` always scores the constant train-median baseline next to the model so
the report has a comparison row; `--binding median` runs the baseline alone.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path
from typing import List, Optional

from ..core import DomainError
from ..gateway.bindings import GatewayError, load_bindings
from ..gateway.export import export_finetune_dataset
from ..points import PointsError, as_points, format_points
from .corpus import SPLIT_ORDERS, ColumnMapping, load_corpus, split_corpus
from .metrics import ZERO_POLICIES
from .report import (
    build_report,
    compare_predictions,
    format_p_value,
    render_report,
    write_report,
)
from .runner import (
    constant_predictions,
    read_predictions,
    run_batch,
    train_median,
    write_predictions,
)
from .stats import ALTERNATIVES

MEDIAN_BASELINE = "median"


def _add_corpus_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--corpus", required=True, help="CSV corpus file")
    parser.add_argument("--project", default=None, help="project code (default: file stem)")
    parser.add_argument("--id-column", default="issuekey")
    parser.add_argument("--title-column", default="title")
    parser.add_argument("--points-column", default="storypoint")
    parser.add_argument("--description-column", default="description")


def _load_corpus(args: argparse.Namespace):
    mapping = ColumnMapping(
        id=args.id_column,
        title=args.title_column,
        points=args.points_column,
        description=args.description_column,
    )
    return load_corpus(args.corpus, mapping=mapping, project_code=args.project)


def _add_scoring_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", default="0.5", help="PRED threshold (default 0.5)")
    parser.add_argument("--zero-policy", choices=ZERO_POLICIES, default="exclude")
    parser.add_argument("--epsilon", default=None, help="denominator floor for --zero-policy epsilon")


def _scoring_kwargs(args: argparse.Namespace) -> dict:
    return {
        "k": as_points(args.k),
        "zero_policy": args.zero_policy,
        "epsilon": as_points(args.epsilon) if args.epsilon is not None else None,
    }


def _cmd_run(args: argparse.Namespace) -> int:
    corpus = _load_corpus(args)
    train, test = split_corpus(corpus, args.split, order=args.order)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    baseline_value = train_median(train)
    baseline = constant_predictions(
        test, baseline_value, estimator="median-baseline", project_code=corpus.project_code
    )
    prediction_sets = [baseline]

    if args.binding != MEDIAN_BASELINE:
        if not args.bindings:
            raise DomainError("--bindings file required to resolve a model binding")
        bindings = load_bindings(args.bindings)
        if args.binding not in bindings:
            known = ", ".join(sorted(bindings)) or "none"
            raise DomainError(f"unknown binding {args.binding!r} (known: {known})")
        predictions = run_batch(
            bindings[args.binding],
            test,
            concurrency=args.concurrency,
            estimator=args.binding,
            project_code=corpus.project_code,
            checkpoint_path=args.checkpoint or out / f"checkpoint-{args.binding}.jsonl",
            include_description=args.include_description,
        )
        prediction_sets.append(predictions)

    for ps in prediction_sets:
        write_predictions(ps, out / f"predictions-{ps.estimator}.csv")

    settings = [
        ("corpus", str(args.corpus)),
        ("project", corpus.project_code),
        ("split", str(args.split)),
        ("order", args.order),
        ("binding", args.binding),
        ("train_median", format_points(baseline_value)),
        ("train_size", str(len(train))),
        ("test_size", str(len(test))),
    ]
    report = build_report(prediction_sets, settings=settings, **_scoring_kwargs(args))
    text_path, record_path = write_report(report, out)
    sys.stdout.write(render_report(report))
    print(f"wrote {text_path} and {record_path}")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    predictions = read_predictions(
        args.predictions, estimator=args.estimator, project_code=args.project or ""
    )
    report = build_report([predictions], **_scoring_kwargs(args))
    sys.stdout.write(render_report(report))
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    a = read_predictions(args.a)
    b = read_predictions(args.b)
    comparison = compare_predictions(a, b, alternative=args.alternative)
    print(
        f"{comparison.estimator_a} vs {comparison.estimator_b}: "
        f"p={format_p_value(comparison.wilcoxon_p)} [{float(comparison.a12):.2f}] "
        f"(n={comparison.n_paired}, {args.alternative})"
    )
    print(f"wilcoxon_p={comparison.wilcoxon_p!r} a12={format_points(comparison.a12)}")
    return 0


def _cmd_export_finetune(args: argparse.Namespace) -> int:
    corpus = _load_corpus(args)
    count = export_finetune_dataset(
        corpus.stories, args.out, include_description=args.include_description
    )
    print(f"wrote {count} records to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="story point benchmarking")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="split a corpus, predict the test slice, report")
    _add_corpus_options(run)
    run.add_argument("--binding", required=True, help=f"binding name, or {MEDIAN_BASELINE!r}")
    run.add_argument("--bindings", default=None, help="bindings config JSON")
    run.add_argument("--split", type=float, default=0.6, help="train fraction (default 0.6)")
    run.add_argument("--order", choices=SPLIT_ORDERS, default="as-is")
    run.add_argument("--concurrency", type=int, default=4)
    run.add_argument("--checkpoint", default=None, help="checkpoint file (default: under --out)")
    run.add_argument("--include-description", action="store_true")
    run.add_argument("--out", required=True, help="output directory")
    _add_scoring_options(run)
    run.set_defaults(fn=_cmd_run)

    score = commands.add_parser("score", help="score one predictions file")
    score.add_argument("--predictions", required=True)
    score.add_argument("--estimator", default=None, help="label (default: file stem)")
    score.add_argument("--project", default=None)
    _add_scoring_options(score)
    score.set_defaults(fn=_cmd_score)

    compare = commands.add_parser("compare", help="Wilcoxon + A12 between two predictions files")
    compare.add_argument("--a", required=True)
    compare.add_argument("--b", required=True)
    compare.add_argument("--alternative", choices=ALTERNATIVES, default="two-sided")
    compare.set_defaults(fn=_cmd_compare)

    export = commands.add_parser("export-finetune", help="write the fine-tune dataset")
    _add_corpus_options(export)
    export.add_argument("--out", required=True, help="output JSONL file")
    export.add_argument("--include-description", action="store_true")
    export.set_defaults(fn=_cmd_export_finetune)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (DomainError, PointsError, GatewayError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
