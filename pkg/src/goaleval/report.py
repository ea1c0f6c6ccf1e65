"""Evaluation report assembly and rendering (JSON, CSV, markdown).

Rendered percentages are rounded half-up (one decimal for goal metrics,
two for feedback rates); the JSON form also carries the exact numerator/
denominator pairs so nothing is lost to rounding.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .dialog_model import Dialog, DialogAnnotation, RcofCode
from .ingestion import FeedbackRates, feedback_rates
from .metrics import (
    AgreementReport,
    BreakdownEntry,
    CohortStats,
    GoalSet,
    agreement_stats,
    build_goal_set,
    compute_gsr,
    failure_breakdown,
    gsr_by_cohort,
    make_month_keyer,
    round_pct,
    turn_count_keyer,
)


def round_half_up(value: Fraction, decimals: int) -> float:
    scale = 10**decimals
    scaled = value * scale + Fraction(1, 2)
    return (scaled.numerator // scaled.denominator) / scale


@dataclass(frozen=True)
class EvaluationReport:
    goal_set: GoalSet
    goal_count: int
    success_count: int
    failed_count: int
    gsr: Fraction | None
    breakdown: dict[RcofCode, BreakdownEntry]
    cohorts_turn_count: dict[str, CohortStats]
    cohorts_month: dict[str, CohortStats]
    feedback: FeedbackRates | None = None
    agreement: AgreementReport | None = None
    source: str = ""


def build_report(
    labels: Iterable[DialogAnnotation],
    dialogs: Iterable[Dialog] | None = None,
    human_labels: Iterable[DialogAnnotation] | None = None,
    source: str = "",
) -> EvaluationReport:
    labels = list(labels)
    goal_set = build_goal_set(labels, source=source)
    goals = goal_set.goals
    success = sum(1 for g in goals if g.quality.value == "success")
    dialog_list = list(dialogs) if dialogs is not None else None
    months: dict[str, CohortStats] = {}
    if dialog_list:
        months = gsr_by_cohort(
            goal_set, make_month_keyer({d.dialog_id: d for d in dialog_list})
        )
    return EvaluationReport(
        goal_set=goal_set,
        goal_count=len(goals),
        success_count=success,
        failed_count=len(goals) - success,
        gsr=compute_gsr(goal_set),
        breakdown=failure_breakdown(goal_set),
        cohorts_turn_count=gsr_by_cohort(goal_set, turn_count_keyer),
        cohorts_month=months,
        feedback=feedback_rates(dialog_list) if dialog_list is not None else None,
        agreement=(
            agreement_stats(labels, list(human_labels))
            if human_labels is not None
            else None
        ),
        source=source,
    )


def _frac_pair(value: Fraction | None) -> list[int] | None:
    if value is None:
        return None
    return [value.numerator, value.denominator]


def _cohort_to_dict(stats: CohortStats) -> dict:
    gsr = stats.gsr
    return {
        "goal_count": stats.goal_count,
        "success_count": stats.success_count,
        "gsr_pct": round_pct(gsr) if gsr is not None else None,
        "gsr_raw": _frac_pair(gsr),
    }


def _breakdown_rows(report: EvaluationReport) -> list[BreakdownEntry]:
    # Table layout: largest causes first, stable on code for ties.
    return sorted(
        report.breakdown.values(), key=lambda e: (-e.count, e.code.value)
    )


def report_to_dict(report: EvaluationReport) -> dict:
    obj: dict = {
        "goals": {
            "total": report.goal_count,
            "successful": report.success_count,
            "failed": report.failed_count,
        },
        "gsr": {
            "pct": round_pct(report.gsr) if report.gsr is not None else None,
            "raw": _frac_pair(report.gsr),
            "undefined": report.gsr is None,
        },
        "failure_breakdown": [
            {
                "code": entry.code.value,
                "label": entry.code.label,
                "count": entry.count,
                "pct_of_goals": round_pct(entry.pct_of_goals),
                "raw": _frac_pair(entry.pct_of_goals),
            }
            for entry in _breakdown_rows(report)
        ],
        "cohorts": {
            "turn_count": {
                key: _cohort_to_dict(stats)
                for key, stats in report.cohorts_turn_count.items()
            },
            "month": {
                key: _cohort_to_dict(stats)
                for key, stats in report.cohorts_month.items()
            },
        },
        "trend": [
            {
                "month": key,
                "goal_count": stats.goal_count,
                "gsr_pct": round_pct(stats.gsr) if stats.gsr is not None else None,
            }
            for key, stats in report.cohorts_month.items()
            if key != "undated"
        ],
        "source": report.source,
    }
    if report.feedback is not None:
        fb = report.feedback
        obj["feedback"] = {
            "single_turn": {
                "dialog_count": fb.single_turn_count,
                "negative_rate_pct": round_half_up(
                    fb.single_turn_negative_rate * 100, 2
                ),
                "raw": _frac_pair(fb.single_turn_negative_rate),
                "empty": fb.single_turn_empty,
            },
            "multi_turn": {
                "dialog_count": fb.multi_turn_count,
                "negative_rate_pct": round_half_up(
                    fb.multi_turn_negative_rate * 100, 2
                ),
                "raw": _frac_pair(fb.multi_turn_negative_rate),
                "empty": fb.multi_turn_empty,
            },
            "multi_turn_share_pct": round_half_up(fb.multi_turn_share * 100, 2),
            "multi_turn_share_raw": _frac_pair(fb.multi_turn_share),
        }
    if report.agreement is not None:
        ag = report.agreement
        obj["agreement"] = {
            "paired": ag.paired,
            "unpaired": ag.unpaired,
            "dialog_level_agreement": float(ag.dialog_level_agreement),
            "dialog_level_raw": _frac_pair(ag.dialog_level_agreement),
            "per_task": {task: float(v) for task, v in sorted(ag.per_task.items())},
            "disagreement_counts": dict(sorted(ag.disagreement_counts.items())),
        }
    return obj


def _render_json(report: EvaluationReport) -> str:
    return json.dumps(report_to_dict(report), ensure_ascii=False, indent=2) + "\n"


def _render_csv(report: EvaluationReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["metric", "count", "pct"])
    gsr = round_pct(report.gsr) if report.gsr is not None else "NA"
    total_pct = 100.0 if report.goal_count else "NA"
    failed_pct = (
        round_pct(Fraction(100 * report.failed_count, report.goal_count))
        if report.goal_count
        else "NA"
    )
    writer.writerow(["total_goals", report.goal_count, total_pct])
    writer.writerow(["successful_goals", report.success_count, gsr])
    writer.writerow(["failed_goals", report.failed_count, failed_pct])
    for entry in _breakdown_rows(report):
        writer.writerow(
            [
                f"rcof_{entry.code.value}",
                entry.count,
                round_pct(entry.pct_of_goals),
            ]
        )
    return buffer.getvalue()


def _render_markdown(report: EvaluationReport) -> str:
    lines = ["# Evaluation report", ""]
    if report.gsr is None:
        lines.append("GSR: undefined (0 goals)")
    else:
        lines.append(f"GSR: {round_pct(report.gsr)}% ({report.goal_count} goals)")
    lines += [
        "",
        "| Metric | Count | % of Goals |",
        "| --- | --- | --- |",
        f"| Total Goals (sample) | {report.goal_count} | 100% |",
    ]
    gsr = round_pct(report.gsr) if report.gsr is not None else "NA"
    failed_pct = (
        round_pct(Fraction(100 * report.failed_count, report.goal_count))
        if report.goal_count
        else "NA"
    )
    lines.append(f"| Successful Goals | {report.success_count} | {gsr}% |")
    lines.append(f"| Failed Goals | {report.failed_count} | {failed_pct}% |")
    nonzero = [e for e in _breakdown_rows(report) if e.count]
    if nonzero:
        lines += [
            "",
            "Top failure root causes:",
            "",
            "| Metric | Count | % of Goals |",
            "| --- | --- | --- |",
        ]
        for entry in nonzero:
            lines.append(
                f"| {entry.code.label} ({entry.code.value}) | {entry.count} "
                f"| {round_pct(entry.pct_of_goals)}% |"
            )
    return "\n".join(lines) + "\n"


def render_report(report: EvaluationReport, format: str = "json") -> str:
    if format == "json":
        return _render_json(report)
    if format == "csv":
        return _render_csv(report)
    if format == "markdown":
        return _render_markdown(report)
    raise ValueError(f"unknown report format {format!r}")


def render_trend_csv(report: EvaluationReport) -> str:
    """Monthly GSR series as CSV (the trend chart's underlying data)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["month", "goal_count", "gsr_pct"])
    for key, stats in report.cohorts_month.items():
        if key == "undated":
            continue
        gsr = stats.gsr
        writer.writerow(
            [key, stats.goal_count, round_pct(gsr) if gsr is not None else "NA"]
        )
    return buffer.getvalue()
