"""End-to-end pipeline: ingest -> judge -> vote -> metrics -> report.

Every stage persists its artifact so runs can resume, and mock/replay runs
are deterministic end to end: re-running with unchanged inputs produces
byte-identical outputs (no wall-clock values enter any artifact).
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path
from typing import Sequence

from .aggregation import (
    EscalationStore,
    LabelStore,
    VerdictOrFailure,
    enqueue_ambiguous,
    majority_vote,
    voted_annotation,
)
from .dialog_model import (
    AnnotationMismatch,
    Dialog,
    RcofCode,
    annotation_from_dict,
    annotation_to_dict,
    parse_dialog,
    serialize_dialog,
)
from .ingestion import (
    ConfigError,
    SamplingConfig,
    link_events,
    load_events,
    parse_duration,
    stratified_sample,
)
from .judge import (
    JudgeFailure,
    JudgeVerdict,
    MockRule,
    ParseError,
    default_code_map,
    default_template,
    load_code_map,
    load_rules,
    load_template,
    mock_judge,
    parse_judge_output,
    render_prompt,
)
from .llm_client import Cassette, LlmClient, ModelEndpoint
from .report import EvaluationReport, build_report, render_report, render_trend_csv

_MODES = ("live", "record", "replay", "mock")


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


@dataclass
class PipelineConfig:
    mode: str = "mock"
    workdir: Path = Path(".")
    events_path: Path | None = None
    dialogs_path: Path = Path("dialogs.jsonl")
    verdicts_dir: Path = Path("verdicts")
    labels_path: Path = Path("labels.jsonl")
    queue_path: Path = Path("queue.jsonl")
    report_dir: Path = Path("reports")
    session_gap: timedelta = timedelta(hours=4)
    sampling: SamplingConfig | None = None
    endpoints: list[ModelEndpoint] = field(default_factory=list)
    mock_rulesets: list[Path] = field(default_factory=list)
    mock_judge_ids: list[str] = field(default_factory=lambda: ["mock-1", "mock-2", "mock-3"])
    mock_default_rcof: RcofCode = RcofCode.E5_SYSTEM_ERROR
    template_dir: Path | None = None
    code_map_path: Path | None = None
    include_snippets: bool = False
    cassette_path: Path | None = None
    human_labels_path: Path | None = None
    sop_path: Path | None = None
    judge_workers: int = 4

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "mock" and not self.mock_rulesets:
            raise ConfigError("mock mode requires at least one ruleset path")
        if self.mode in ("record", "replay") and self.cassette_path is None:
            raise ConfigError(f"{self.mode} mode requires a cassette path")
        if self.mode != "mock" and not self.endpoints:
            raise ConfigError(f"{self.mode} mode requires endpoint definitions")

    def resolve(self, path: Path | None) -> Path | None:
        if path is None:
            return None
        path = Path(path)
        return path if path.is_absolute() else self.workdir / path

    @classmethod
    def from_dict(cls, obj: dict, base_dir: Path | None = None) -> "PipelineConfig":
        base = Path(base_dir) if base_dir is not None else Path(".")
        paths = obj.get("paths", {})

        def path_or(key: str, default: str | None) -> Path | None:
            raw = paths.get(key, default)
            return Path(raw) if raw is not None else None

        sampling = None
        if obj.get("sampling"):
            s = obj["sampling"]
            sampling = SamplingConfig(
                total=int(s["total"]),
                multi_turn_weight=float(s.get("multi_turn_weight", 3.0)),
                seed=int(s.get("seed", 0)),
            )
        endpoints = [ModelEndpoint.from_dict(e) for e in obj.get("endpoints", [])]
        mock = obj.get("mock", {})
        rulesets = [Path(p) for p in mock.get("rulesets", [])]
        judge_ids = list(mock.get("judge_ids", []))
        if rulesets and not judge_ids:
            judge_ids = (
                ["mock-1", "mock-2", "mock-3"]
                if len(rulesets) == 1
                else [f"mock-{i + 1}" for i in range(len(rulesets))]
            )
        gap = obj.get("session_gap", "4h")
        return cls(
            mode=obj.get("mode", "mock"),
            workdir=Path(obj["workdir"]) if obj.get("workdir") else base,
            events_path=path_or("events", None),
            dialogs_path=path_or("dialogs", "dialogs.jsonl"),
            verdicts_dir=path_or("verdicts_dir", "verdicts"),
            labels_path=path_or("labels", "labels.jsonl"),
            queue_path=path_or("queue", "queue.jsonl"),
            report_dir=path_or("reports", "reports"),
            session_gap=parse_duration(gap) if isinstance(gap, str) else timedelta(seconds=gap),
            sampling=sampling,
            endpoints=endpoints,
            mock_rulesets=rulesets,
            mock_judge_ids=judge_ids or ["mock-1", "mock-2", "mock-3"],
            mock_default_rcof=RcofCode.from_wire(mock.get("default_rcof", "E5")),
            template_dir=Path(obj["template_dir"]) if obj.get("template_dir") else None,
            code_map_path=Path(obj["rcof_code_map"]) if obj.get("rcof_code_map") else None,
            include_snippets=bool(obj.get("include_snippets", False)),
            cassette_path=path_or("cassette", None),
            human_labels_path=path_or("human_labels", None),
            sop_path=Path(obj["sop_path"]) if obj.get("sop_path") else None,
            judge_workers=int(obj.get("judge_workers", 4)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        obj = json.loads(path.read_text(encoding="utf-8"))
        return cls.from_dict(obj, base_dir=path.parent)


@dataclass
class RunCounts:
    dialogs_in: int = 0
    verdict_groups: int = 0
    voted: int = 0
    escalated: int = 0
    judge_failed_dialogs: int = 0
    judge_failures: dict[str, int] = field(default_factory=dict)

    def reconciles(self) -> bool:
        return (
            self.dialogs_in == self.verdict_groups
            and self.verdict_groups
            == self.voted + self.escalated + self.judge_failed_dialogs
        )


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def load_dialogs(path: Path, strict: bool = True) -> list[Dialog]:
    dialogs = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                dialogs.append(parse_dialog(line, strict=strict))
    return dialogs


def write_dialogs(path: Path, dialogs: Sequence[Dialog]) -> None:
    atomic_write(path, "".join(serialize_dialog(d) + "\n" for d in dialogs))


def load_labels(path: Path) -> list:
    store = LabelStore(path)
    merged = store.latest()
    return [merged[k] for k in sorted(merged)]


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def _stage_ingest(cfg: PipelineConfig, resume: bool) -> list[Dialog]:
    dialogs_path = cfg.resolve(cfg.dialogs_path)
    if cfg.events_path is None or (resume and dialogs_path.exists()):
        if not dialogs_path.exists():
            raise StageError("ingest", f"no dialogs at {dialogs_path} and no events input")
        return load_dialogs(dialogs_path, strict=False)
    events = load_events(cfg.resolve(cfg.events_path))
    dialogs, warnings = link_events(events, gap=cfg.session_gap)
    if cfg.sampling is not None:
        dialogs = stratified_sample(dialogs, cfg.sampling)
    write_dialogs(dialogs_path, dialogs)
    if warnings:
        report_dir = cfg.resolve(cfg.report_dir)
        atomic_write(
            report_dir / "ingest_warnings.jsonl",
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
    return dialogs


def _verdict_record(dialog_id: str, outcome: VerdictOrFailure) -> dict:
    if isinstance(outcome, JudgeVerdict):
        return {
            "dialog_id": dialog_id,
            "judge_id": outcome.judge_id,
            "annotation": annotation_to_dict(outcome.annotation),
            "think_text": outcome.think_text,
            "raw": outcome.raw,
            "latency": outcome.latency,
            "error": None,
        }
    return {
        "dialog_id": dialog_id,
        "judge_id": outcome.judge_id,
        "annotation": None,
        "think_text": None,
        "raw": outcome.raw,
        "latency": outcome.latency,
        "error": outcome.error,
    }


def _outcome_from_record(obj: dict) -> VerdictOrFailure:
    if obj.get("annotation") is not None:
        return JudgeVerdict(
            annotation=annotation_from_dict(obj["annotation"]),
            think_text=obj.get("think_text"),
            raw=obj.get("raw") or "",
            judge_id=obj["judge_id"],
            latency=obj.get("latency", 0.0),
        )
    return JudgeFailure(
        judge_id=obj["judge_id"],
        error=obj.get("error") or "unknown",
        raw=obj.get("raw"),
        latency=obj.get("latency", 0.0),
    )


def _mock_judges(cfg: PipelineConfig) -> list[tuple[str, list[MockRule]]]:
    rulesets = [load_rules(cfg.resolve(p)) for p in cfg.mock_rulesets]
    judge_ids = list(cfg.mock_judge_ids)
    if len(rulesets) == 1 and len(judge_ids) > 1:
        rulesets = rulesets * len(judge_ids)
    if len(rulesets) != len(judge_ids):
        raise ConfigError(
            f"{len(cfg.mock_rulesets)} rulesets cannot serve {len(judge_ids)} judges"
        )
    return list(zip(judge_ids, rulesets))


def judge_ids_for(cfg: PipelineConfig) -> list[str]:
    if cfg.mode == "mock":
        return list(cfg.mock_judge_ids)
    return [e.judge_id for e in cfg.endpoints]


def read_verdict_files(
    verdicts_dir: Path, dialogs: list[Dialog], judge_ids: list[str] | None = None
) -> list[list[VerdictOrFailure]]:
    """Reload persisted judge outcomes, aligned with the dialog order."""
    verdicts_dir = Path(verdicts_dir)
    if judge_ids is None:
        judge_ids = sorted(p.stem for p in verdicts_dir.glob("*.jsonl"))
    by_judge: dict[str, dict[str, VerdictOrFailure]] = {}
    for judge_id in judge_ids:
        by_judge[judge_id] = {}
        path = verdicts_dir / f"{judge_id}.jsonl"
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    by_judge[judge_id][obj["dialog_id"]] = _outcome_from_record(obj)
    return [
        [
            by_judge[judge_id].get(
                d.dialog_id, JudgeFailure(judge_id, "missing from verdict file")
            )
            for judge_id in judge_ids
        ]
        for d in dialogs
    ]


def _stage_judge(
    cfg: PipelineConfig, dialogs: list[Dialog], resume: bool
) -> list[list[VerdictOrFailure]]:
    verdicts_dir = cfg.resolve(cfg.verdicts_dir)
    judge_ids = judge_ids_for(cfg)
    if resume and all(
        (verdicts_dir / f"{judge_id}.jsonl").exists() for judge_id in judge_ids
    ):
        return read_verdict_files(verdicts_dir, dialogs, judge_ids)

    if cfg.mode == "mock":
        judges = _mock_judges(cfg)

        def run_one(d: Dialog) -> list[VerdictOrFailure]:
            outcomes: list[VerdictOrFailure] = []
            for judge_id, rules in judges:
                try:
                    outcomes.append(
                        mock_judge(
                            d,
                            rules,
                            judge_id=judge_id,
                            default_rcof=cfg.mock_default_rcof,
                        )
                    )
                except Exception as exc:
                    outcomes.append(JudgeFailure(judge_id, f"{type(exc).__name__}: {exc}"))
            return outcomes

        per_dialog = [run_one(d) for d in dialogs]
    else:
        template = (
            load_template(cfg.template_dir) if cfg.template_dir else default_template()
        )
        code_map = (
            load_code_map(cfg.code_map_path) if cfg.code_map_path else default_code_map()
        )
        cassette = (
            Cassette(cfg.resolve(cfg.cassette_path)) if cfg.cassette_path else None
        )
        client = LlmClient(mode=cfg.mode, cassette=cassette)

        def run_one(d: Dialog) -> list[VerdictOrFailure]:
            prompt = render_prompt(d, template, include_snippets=cfg.include_snippets)
            outcomes: list[VerdictOrFailure] = []
            for result in client.fan_out(cfg.endpoints, prompt):
                if result.error is not None:
                    outcomes.append(
                        JudgeFailure(
                            result.judge_id,
                            f"{type(result.error).__name__}: {result.error}",
                        )
                    )
                    continue
                try:
                    outcomes.append(
                        parse_judge_output(
                            result.text,
                            d,
                            judge_id=result.judge_id,
                            latency=result.latency,
                            code_map=code_map,
                        )
                    )
                except (ParseError, AnnotationMismatch) as exc:
                    outcomes.append(
                        JudgeFailure(
                            result.judge_id,
                            f"{type(exc).__name__}: {exc}",
                            raw=result.text,
                            latency=result.latency,
                        )
                    )
            return outcomes

        with ThreadPoolExecutor(max_workers=max(1, cfg.judge_workers)) as pool:
            per_dialog = list(pool.map(run_one, dialogs))

    lines: dict[str, list[str]] = {judge_id: [] for judge_id in judge_ids}
    for d, outcomes in zip(dialogs, per_dialog):
        for outcome in outcomes:
            lines[outcome.judge_id].append(
                json.dumps(_verdict_record(d.dialog_id, outcome), ensure_ascii=False)
            )
    for judge_id in judge_ids:
        atomic_write(
            verdicts_dir / f"{judge_id}.jsonl", "".join(l + "\n" for l in lines[judge_id])
        )
    return per_dialog


def run_vote(
    dialogs: list[Dialog],
    per_dialog: list[list[VerdictOrFailure]],
    labels_path: Path,
    queue_path: Path,
    sop_ref: str | None = None,
    counts: RunCounts | None = None,
) -> RunCounts:
    """Vote every dialog's usable verdicts; clean votes go to the label
    store, ambiguous ones to the escalation queue, <2-verdict dialogs are
    counted as judge-failed. The label file is rebuilt, never appended."""
    if counts is None:
        counts = RunCounts(dialogs_in=len(dialogs), verdict_groups=len(per_dialog))
    labels_path = Path(labels_path)
    if labels_path.exists():
        labels_path.unlink()
    label_store = LabelStore(labels_path)
    store = EscalationStore(queue_path)
    for d, outcomes in zip(dialogs, per_dialog):
        for outcome in outcomes:
            if isinstance(outcome, JudgeFailure):
                counts.judge_failures[outcome.judge_id] = (
                    counts.judge_failures.get(outcome.judge_id, 0) + 1
                )
        usable = [o for o in outcomes if isinstance(o, JudgeVerdict)]
        if len(usable) < 2:
            counts.judge_failed_dialogs += 1
            continue
        result = majority_vote(usable, d)
        if result.ambiguous_fields:
            enqueue_ambiguous(result, outcomes, d, store, sop_ref=sop_ref)
            counts.escalated += 1
        else:
            label_store.append(
                voted_annotation(result, [v.judge_id for v in usable])
            )
            counts.voted += 1
    return counts


def _stage_vote(
    cfg: PipelineConfig,
    dialogs: list[Dialog],
    per_dialog: list[list[VerdictOrFailure]],
    resume: bool,
    counts: RunCounts,
) -> None:
    labels_path = cfg.resolve(cfg.labels_path)
    queue_path = cfg.resolve(cfg.queue_path)
    if resume and labels_path.exists():
        store = EscalationStore(queue_path) if queue_path.exists() else None
        counts.voted = len(LabelStore(labels_path).load())
        counts.escalated = len(store.items()) if store else 0
        counts.judge_failed_dialogs = (
            counts.dialogs_in - counts.voted - counts.escalated
        )
        return
    run_vote(
        dialogs,
        per_dialog,
        labels_path,
        queue_path,
        sop_ref=str(cfg.sop_path) if cfg.sop_path else None,
        counts=counts,
    )


def _stage_metrics(cfg: PipelineConfig, dialogs: list[Dialog]) -> EvaluationReport:
    labels_path = cfg.resolve(cfg.labels_path)
    labels = load_labels(labels_path) if labels_path.exists() else []
    source = _sha256(labels_path.read_bytes())[:16] if labels_path.exists() else ""
    human = None
    if cfg.human_labels_path is not None:
        human = load_labels(cfg.resolve(cfg.human_labels_path))
    return build_report(labels, dialogs=dialogs, human_labels=human, source=source)


def config_digest(cfg: PipelineConfig) -> str:
    """Digest of the run-relevant config content (file digests, not paths)."""

    def file_digest(path: Path | None) -> str | None:
        if path is None:
            return None
        resolved = cfg.resolve(path)
        return _sha256(resolved.read_bytes()) if resolved.exists() else None

    payload = {
        "mode": cfg.mode,
        "gap_seconds": cfg.session_gap.total_seconds(),
        "sampling": (
            {
                "total": cfg.sampling.total,
                "multi_turn_weight": cfg.sampling.multi_turn_weight,
                "seed": cfg.sampling.seed,
            }
            if cfg.sampling
            else None
        ),
        "judges": judge_ids_for(cfg),
        "rulesets": [file_digest(p) for p in cfg.mock_rulesets],
        "template": file_digest(cfg.template_dir / "body.txt") if cfg.template_dir else "default",
        "code_map": file_digest(cfg.code_map_path) if cfg.code_map_path else "default",
        "include_snippets": cfg.include_snippets,
        "default_rcof": cfg.mock_default_rcof.value,
    }
    return _sha256(json.dumps(payload, sort_keys=True).encode("utf-8"))


def _stage_report(cfg: PipelineConfig, report: EvaluationReport, counts: RunCounts) -> None:
    report_dir = cfg.resolve(cfg.report_dir)
    atomic_write(report_dir / "report.json", render_report(report, "json"))
    atomic_write(report_dir / "report.csv", render_report(report, "csv"))
    atomic_write(report_dir / "report.md", render_report(report, "markdown"))
    atomic_write(report_dir / "trend.csv", render_trend_csv(report))
    manifest = {
        "config_digest": config_digest(cfg),
        "counts": {
            "dialogs_in": counts.dialogs_in,
            "verdict_groups": counts.verdict_groups,
            "voted": counts.voted,
            "escalated": counts.escalated,
            "judge_failed_dialogs": counts.judge_failed_dialogs,
        },
        "judge_failures": dict(sorted(counts.judge_failures.items())),
        "reconciles": counts.reconciles(),
    }
    atomic_write(
        report_dir / "run_manifest.json",
        json.dumps(manifest, ensure_ascii=False, indent=2) + "\n",
    )


def run_pipeline(cfg: PipelineConfig, resume: bool = False) -> EvaluationReport:
    """Execute every stage in order, persisting intermediate artifacts.

    With ``resume`` set, stages whose outputs already exist are skipped.
    Raises StageError labeled with the failing stage.
    """
    counts = RunCounts()
    try:
        dialogs = _stage_ingest(cfg, resume)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("ingest", str(exc)) from exc
    counts.dialogs_in = len(dialogs)

    try:
        per_dialog = _stage_judge(cfg, dialogs, resume)
    except Exception as exc:
        raise StageError("judge", str(exc)) from exc
    counts.verdict_groups = len(per_dialog)

    try:
        _stage_vote(cfg, dialogs, per_dialog, resume, counts)
    except Exception as exc:
        raise StageError("vote", str(exc)) from exc

    try:
        report = _stage_metrics(cfg, dialogs)
    except Exception as exc:
        raise StageError("metrics", str(exc)) from exc

    try:
        _stage_report(cfg, report, counts)
    except Exception as exc:
        raise StageError("report", str(exc)) from exc
    return report
