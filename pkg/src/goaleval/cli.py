"""Command-line entry point.

Subcommands mirror the pipeline stages (ingest, judge, vote, metrics,
report), plus serve/resolve for adjudication and run for the full
pipeline. Exit codes: 0 success, 1 stage error, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import aggregation, ingestion, pipeline
from .dialog_model import (
    AnnotationMismatch,
    SchemaError,
    annotation_from_dict,
)
from .llm_client import ConfigError as ClientConfigError
from .llm_client import load_endpoints
from .report import build_report, render_report, render_trend_csv

EXIT_OK = 0
EXIT_STAGE = 1
EXIT_CONFIG = 2

_CONFIG_ERRORS = (ingestion.ConfigError, ClientConfigError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="goaleval",
        description="Goal-oriented evaluation pipeline for chatbot logs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="link raw events into dialog JSONL")
    p.add_argument("--events", required=True, help="event JSONL file or directory")
    p.add_argument("--gap", default="4h", help="session split gap (e.g. 4h, 30m)")
    p.add_argument("--out", required=True, help="output dialogs.jsonl")
    p.add_argument("--warnings", help="optional warnings JSONL output")
    p.add_argument("--sample-total", type=int, help="stratified sample size")
    p.add_argument("--multi-turn-weight", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("judge", help="run the judge ensemble over dialogs")
    p.add_argument("--dialogs", required=True)
    p.add_argument("--verdicts-dir", required=True)
    p.add_argument("--mode", default="mock", choices=["mock", "live", "record", "replay"])
    p.add_argument("--rulesets", nargs="+", help="mock ruleset JSON path(s)")
    p.add_argument("--judge-ids", nargs="+", help="judge ids (mock mode)")
    p.add_argument("--endpoints", help="endpoint config file (JSON/TOML)")
    p.add_argument("--cassette", help="cassette JSONL (record/replay)")
    p.add_argument("--template", help="prompt template directory")
    p.add_argument("--code-map", help="RCOF prompt-code map JSON")
    p.add_argument("--include-snippets", action="store_true")
    p.add_argument("--workers", type=int, default=4)

    p = sub.add_parser("vote", help="majority-vote verdicts into labels")
    p.add_argument("--dialogs", required=True)
    p.add_argument("--verdicts", required=True, help="verdicts directory")
    p.add_argument("--out", required=True, help="labels JSONL output")
    p.add_argument("--queue", required=True, help="escalation queue journal")
    p.add_argument("--sop", help="SOP document path recorded on items")

    p = sub.add_parser("metrics", help="compute the evaluation report artifacts")
    p.add_argument("--labels", required=True)
    p.add_argument("--dialogs")
    p.add_argument("--human-labels")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("report", help="render a report to stdout or a file")
    p.add_argument("--labels", required=True)
    p.add_argument("--dialogs")
    p.add_argument("--human-labels")
    p.add_argument("--format", default="markdown", choices=["json", "csv", "markdown"])
    p.add_argument("--out")

    p = sub.add_parser("resolve", help="apply a human resolution to a queue item")
    p.add_argument("--item", required=True)
    p.add_argument("--from", dest="from_file", required=True, help="annotation JSON file")
    p.add_argument("--annotator", required=True)
    p.add_argument("--queue", required=True)
    p.add_argument("--labels", required=True)

    p = sub.add_parser("serve", help="host the adjudication API and UI")
    p.add_argument("--queue", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--dialogs")
    p.add_argument("--sop")
    p.add_argument("--ui", help="static UI asset directory")
    p.add_argument("--bind", default="127.0.0.1:8000")

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--mode", choices=["mock", "live", "record", "replay"])
    return parser


def _cmd_ingest(args) -> int:
    gap = ingestion.parse_duration(args.gap)
    events = ingestion.load_events(Path(args.events))
    dialogs, warnings = ingestion.link_events(events, gap=gap)
    if args.sample_total is not None:
        cfg = ingestion.SamplingConfig(
            total=args.sample_total,
            multi_turn_weight=args.multi_turn_weight,
            seed=args.seed,
        )
        dialogs = ingestion.stratified_sample(dialogs, cfg)
    pipeline.write_dialogs(Path(args.out), dialogs)
    if args.warnings:
        pipeline.atomic_write(
            Path(args.warnings),
            "".join(
                json.dumps(
                    {
                        "kind": w.kind,
                        "session_id": w.session_id,
                        "event_time": w.event_time.isoformat(),
                        "detail": w.detail,
                    },
                    ensure_ascii=False,
                )
                + "\n"
                for w in warnings
            ),
        )
    print(f"ingested {len(dialogs)} dialogs ({len(warnings)} warnings) -> {args.out}")
    return EXIT_OK


def _cmd_judge(args) -> int:
    cfg = pipeline.PipelineConfig(
        mode=args.mode,
        workdir=Path("."),
        dialogs_path=Path(args.dialogs),
        verdicts_dir=Path(args.verdicts_dir),
        endpoints=load_endpoints(args.endpoints) if args.endpoints else [],
        mock_rulesets=[Path(p) for p in (args.rulesets or [])],
        mock_judge_ids=(
            list(args.judge_ids)
            if args.judge_ids
            else ["mock-1", "mock-2", "mock-3"]
        ),
        template_dir=Path(args.template) if args.template else None,
        code_map_path=Path(args.code_map) if args.code_map else None,
        include_snippets=args.include_snippets,
        cassette_path=Path(args.cassette) if args.cassette else None,
        judge_workers=args.workers,
    )
    dialogs = pipeline.load_dialogs(Path(args.dialogs), strict=False)
    per_dialog = pipeline._stage_judge(cfg, dialogs, resume=False)
    failures = sum(
        1
        for outcomes in per_dialog
        for o in outcomes
        if isinstance(o, pipeline.JudgeFailure)
    )
    print(
        f"judged {len(dialogs)} dialogs with {len(pipeline.judge_ids_for(cfg))} judges "
        f"({failures} judge failures) -> {args.verdicts_dir}"
    )
    return EXIT_OK


def _cmd_vote(args) -> int:
    dialogs = pipeline.load_dialogs(Path(args.dialogs), strict=False)
    per_dialog = pipeline.read_verdict_files(Path(args.verdicts), dialogs)
    counts = pipeline.run_vote(
        dialogs,
        per_dialog,
        Path(args.out),
        Path(args.queue),
        sop_ref=args.sop,
    )
    print(
        f"voted {counts.voted}, escalated {counts.escalated}, "
        f"judge-failed {counts.judge_failed_dialogs} of {counts.dialogs_in} dialogs"
    )
    return EXIT_OK


def _load_report_inputs(args):
    labels = pipeline.load_labels(Path(args.labels))
    dialogs = (
        pipeline.load_dialogs(Path(args.dialogs), strict=False)
        if args.dialogs
        else None
    )
    human = (
        pipeline.load_labels(Path(args.human_labels)) if args.human_labels else None
    )
    return build_report(labels, dialogs=dialogs, human_labels=human)


def _cmd_metrics(args) -> int:
    report = _load_report_inputs(args)
    out_dir = Path(args.out_dir)
    pipeline.atomic_write(out_dir / "report.json", render_report(report, "json"))
    pipeline.atomic_write(out_dir / "report.csv", render_report(report, "csv"))
    pipeline.atomic_write(out_dir / "report.md", render_report(report, "markdown"))
    pipeline.atomic_write(out_dir / "trend.csv", render_trend_csv(report))
    print(f"wrote report artifacts ({report.goal_count} goals) -> {out_dir}")
    return EXIT_OK


def _cmd_report(args) -> int:
    report = _load_report_inputs(args)
    text = render_report(report, args.format)
    if args.out:
        pipeline.atomic_write(Path(args.out), text)
        print(f"wrote {args.format} report -> {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_resolve(args) -> int:
    annotation = annotation_from_dict(
        json.loads(Path(args.from_file).read_text(encoding="utf-8"))
    )
    store = aggregation.EscalationStore(Path(args.queue))
    labels = aggregation.LabelStore(Path(args.labels))
    final = aggregation.apply_resolution(
        store, labels, args.item, annotation, args.annotator
    )
    print(f"resolved {args.item} (dialog {final.dialog_id}) by {args.annotator}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, _, port = args.bind.rpartition(":")
    app = create_app(
        queue_path=Path(args.queue),
        labels_path=Path(args.labels),
        dialogs_path=Path(args.dialogs) if args.dialogs else None,
        sop_path=Path(args.sop) if args.sop else None,
        ui_dir=Path(args.ui) if args.ui else None,
    )
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = pipeline.PipelineConfig.from_file(Path(args.config))
    if args.mode:
        # explicit flags win over the config file
        obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
        obj["mode"] = args.mode
        cfg = pipeline.PipelineConfig.from_dict(obj, base_dir=Path(args.config).parent)
    report = pipeline.run_pipeline(cfg, resume=args.resume)
    gsr = report.gsr
    summary = "undefined" if gsr is None else f"{float(gsr):.1f}%"
    print(f"pipeline complete: {report.goal_count} goals, GSR {summary}")
    return EXIT_OK


_HANDLERS = {
    "ingest": _cmd_ingest,
    "judge": _cmd_judge,
    "vote": _cmd_vote,
    "metrics": _cmd_metrics,
    "report": _cmd_report,
    "resolve": _cmd_resolve,
    "serve": _cmd_serve,
    "run": _cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handler = _HANDLERS[args.command]
    try:
        return handler(args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # malformed rule files, bad enum values, and similar input mistakes
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except pipeline.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (SchemaError, AnnotationMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except aggregation.NotFound as exc:
        print(f"error: unknown item {exc}", file=sys.stderr)
        return EXIT_STAGE
    except aggregation.AlreadyResolved as exc:
        print(f"error: item already resolved: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
