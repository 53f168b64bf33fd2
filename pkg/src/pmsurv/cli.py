"""Command-line surface: classify, screen, ils, hazard, pipeline, synth, eval.

Exit codes: 0 ok, 1 usage, 2 parse/validation, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus_io import (
    corpus_digest,
    dumps_canonical,
    emit_report,
    load_corpus,
    load_truth,
    write_corpus,
    write_truth,
)
from .errors import (
    InsufficientPopulation,
    InvalidConfig,
    ParseError,
    PmsurvError,
    SeriesGap,
    ValidationFailed,
)
from .ils import fit_hazard, ils_dl
from .model import Category
from .pipeline import run_pipeline
from .runconfig import load_run_config
from .screens import composite_score, lifecycle_flag
from .signrand import classify_accounts, persistence_retention
from .synth import evaluate_detection, generate_world

logger = logging.getLogger("pmsurv")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_RUNTIME = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit 2; usage errors are 1 here
        raise _UsageError(message)


def _common_flags(p: argparse.ArgumentParser, corpus_required: bool = True):
    p.add_argument("--corpus", help="corpus directory (JSONL files)",
                   required=corpus_required)
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--workers", type=int, help="worker process count")
    p.add_argument("--out", help="output file or directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pmsurv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", parents=[], help="sign-randomization skill classes")
    _common_flags(p)
    p.add_argument("--account", help="classify a single account")
    p.add_argument("--category", choices=[c.value for c in Category],
                   help="restrict events to one category")

    p = sub.add_parser("screen", help="lifecycle or composite screens")
    screen_sub = p.add_subparsers(dest="screen_kind", required=True)
    pl = screen_sub.add_parser("lifecycle")
    _common_flags(pl)
    pl.add_argument("--flagged-only", action="store_true")
    pc = screen_sub.add_parser("composite")
    _common_flags(pc)
    pc.add_argument("--market", help="score a single market")

    p = sub.add_parser("ils", help="per-market leakage scores")
    _common_flags(p)
    p.add_argument("--market", help="score a single market")

    p = sub.add_parser("hazard", help="exponential fit of event lead times")
    _common_flags(p)
    p.add_argument("--category", choices=[c.value for c in Category])

    p = sub.add_parser("pipeline", help="three-stage surveillance pipeline")
    pipe_sub = p.add_subparsers(dest="pipeline_kind", required=True)
    pr = pipe_sub.add_parser("run")
    _common_flags(pr)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    _common_flags(p, corpus_required=False)

    p = sub.add_parser("eval", help="score flags against ground truth")
    p.add_argument("--truth", required=True, help="truth.jsonl path")
    p.add_argument("--report", required=True, help="pipeline report.json path")
    p.add_argument("--out")

    p = sub.add_parser("persistence", help="train/test skill retention")
    _common_flags(p)
    p.add_argument("--split-seed", type=int, default=0)
    return parser


def _write_or_print(payload: str, out: str | None) -> None:
    if out:
        Path(out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)


def _jsonl(records) -> str:
    from .corpus_io import to_jsonable

    return "".join(
        json.dumps(to_jsonable(r), sort_keys=True, separators=(",", ":")) + "\n"
        for r in records
    )


def _cmd_classify(args, rc) -> int:
    corpus = load_corpus(args.corpus)
    category = Category(args.category) if args.category else None
    ids = [args.account] if args.account else None
    results = classify_accounts(
        corpus, rc.null_spec, mm_config=rc.pipeline.mm_config,
        category=category, account_ids=ids, workers=rc.workers,
    )
    _write_or_print(_jsonl(results), args.out)
    return EXIT_OK


def _cmd_screen(args, rc) -> int:
    corpus = load_corpus(args.corpus)
    if args.screen_kind == "lifecycle":
        rows = []
        for account_id in sorted(corpus.accounts):
            event_ids = sorted(
                {corpus.markets[t.market_id].event_id
                 for t in corpus.account_trades(account_id)}
            )
            for event_id in event_ids:
                flag = lifecycle_flag(corpus, account_id, event_id, rc.lifecycle)
                if flag.flagged or not args.flagged_only:
                    rows.append(flag)
        _write_or_print(_jsonl(rows), args.out)
        return EXIT_OK
    market_ids = [args.market] if args.market else sorted(corpus.markets)
    rows = []
    for market_id in market_ids:
        try:
            rows.extend(
                composite_score(
                    corpus, market_id,
                    weights=rc.pipeline.composite_weights,
                    timing_window=rc.pipeline.composite_timing_window,
                )
            )
        except InsufficientPopulation:
            if args.market:  # explicit request: surface the error
                raise
    _write_or_print(_jsonl(rows), args.out)
    return EXIT_OK


def _cmd_ils(args, rc) -> int:
    corpus = load_corpus(args.corpus)
    market_ids = [args.market] if args.market else sorted(corpus.markets)
    rows = []
    for market_id in market_ids:
        market = corpus.markets[market_id]
        series = corpus.series.get(market_id)
        if market.t_event is None or series is None or not series.timestamps:
            rows.append({"market_id": market_id, "skip_reason": "missing_t_event"
                         if market.t_event is None else "no_price_series"})
            continue
        try:
            result = ils_dl(
                series, market,
                epsilon=rc.pipeline.ils_epsilon,
                anchor_grid_minutes=rc.pipeline.anchor_grid_minutes,
                eta=rc.pipeline.anchor_eta,
                short_window=rc.pipeline.short_window,
            )
        except SeriesGap as exc:
            rows.append({"market_id": market_id, "skip_reason": "series_gap",
                         "detail": str(exc)})
            continue
        rows.append(result)
    _write_or_print(_jsonl(rows), args.out)
    return EXIT_OK


def _cmd_hazard(args, rc) -> int:
    corpus = load_corpus(args.corpus)
    category = Category(args.category) if args.category else None
    taus = [
        m.lead_time_days
        for m in corpus.markets.values()
        if m.t_event is not None and m.lead_time_days > 0
        and (category is None or m.category is category)
    ]
    fit = fit_hazard(taus)
    _write_or_print(dumps_canonical(fit), args.out)
    return EXIT_OK


def _cmd_pipeline(args, rc) -> int:
    corpus = load_corpus(args.corpus)
    report = run_pipeline(corpus, rc.pipeline, workers=rc.workers)
    out_dir = Path(args.out) if args.out else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    digest_json = emit_report(report, "json", out_dir / "report.json")
    digest_csv = emit_report(report, "csv", out_dir / "queue.csv")
    sys.stdout.write(
        f"report.json sha256={digest_json}\nqueue.csv sha256={digest_csv}\n"
        f"stage1_flagged={len(report.stage1_flagged)} "
        f"stage2_queued={len(report.stage2_queue)} "
        f"stage3_queued={len(report.stage3_queue)}\n"
    )
    return EXIT_OK


def _cmd_synth(args, rc) -> int:
    corpus, truth = generate_world(rc.world)
    out_dir = Path(args.out) if args.out else Path("synth-world")
    write_corpus(corpus, out_dir)
    write_truth(truth, out_dir / "truth.jsonl")
    sys.stdout.write(
        f"corpus digest={corpus_digest(corpus)} accounts={len(corpus.accounts)} "
        f"markets={len(corpus.markets)} trades={len(corpus.trades)}\n"
    )
    return EXIT_OK


def _cmd_eval(args, rc) -> int:
    truth = load_truth(args.truth)
    try:
        report_obj = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(args.report, exc.lineno, exc.msg) from None
    flagged = [r["account_id"] for r in report_obj.get("stage1_flagged", [])]
    metrics = evaluate_detection(flagged, truth)
    stage3 = [e["market_id"] for e in report_obj.get("stage3_queue", [])]
    moved = {m for m, v in truth.insider_moved.items() if v}
    payload = {
        "account_precision": metrics.account_precision,
        "account_recall": metrics.account_recall,
        "population_confusion": metrics.population_confusion,
        "n_flagged_accounts": metrics.n_flagged_accounts,
        "n_stage3_markets": len(stage3),
        "market_recall": (len(set(stage3) & moved) / len(moved)) if moved else None,
        "market_precision": (len(set(stage3) & moved) / len(stage3)) if stage3 else None,
    }
    _write_or_print(json.dumps(payload, sort_keys=True, indent=2) + "\n", args.out)
    return EXIT_OK


def _cmd_persistence(args, rc) -> int:
    corpus = load_corpus(args.corpus)
    result = persistence_retention(corpus, rc.null_spec, args.split_seed,
                                   mm_config=rc.pipeline.mm_config)
    payload = {
        "split_seed": result.split_seed,
        "retention_rate_skilled": result.retention_rate_skilled,
        "retention_rate_lucky": result.retention_rate_lucky,
        "n_qualified": result.n_qualified,
    }
    _write_or_print(json.dumps(payload, sort_keys=True, indent=2) + "\n", args.out)
    return EXIT_OK


_COMMANDS = {
    "classify": _cmd_classify,
    "screen": _cmd_screen,
    "ils": _cmd_ils,
    "hazard": _cmd_hazard,
    "pipeline": _cmd_pipeline,
    "synth": _cmd_synth,
    "eval": _cmd_eval,
    "persistence": _cmd_persistence,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    try:
        rc = load_run_config(
            getattr(args, "config", None),
            seed_override=getattr(args, "seed", None),
            workers_override=getattr(args, "workers", None),
        )
        return _COMMANDS[args.command](args, rc)
    except (ParseError, ValidationFailed, InvalidConfig) as exc:
        if isinstance(exc, ValidationFailed):
            for item in exc.report.fatal:
                sys.stderr.write(f"fatal: {item}\n")
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_PARSE
    except PmsurvError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
