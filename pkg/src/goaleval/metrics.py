"""Goal derivation and evaluation metrics over voted annotations.

Goals are contiguous turn spans opened by every is_new_goal flag; a goal
succeeds only if every turn in it succeeds, and a failed goal is attributed
to its earliest failed turn's RCOF code. Percentages are kept as exact
rationals and rounded (one decimal, half-up) only at presentation time.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping

from .dialog_model import (
    Dialog,
    DialogAnnotation,
    GoalRecord,
    Quality,
    RcofCode,
)


class MissingRcof(Exception):
    """A failed turn lacks an RCOF code (label-store invariant breach)."""


class PairingError(Exception):
    """No dialogs could be paired between model and human label sets."""


class EmptyInput(Exception):
    """Raised where an empty goal set cannot yield a defined metric."""


@dataclass(frozen=True)
class GoalSpan:
    """A goal's turn range within one dialog, before quality is derived."""

    dialog_id: str
    goal_index: int
    start_turn: int
    end_turn: int

    @property
    def turn_count(self) -> int:
        return self.end_turn - self.start_turn + 1


@dataclass(frozen=True)
class GoalSet:
    goals: tuple[GoalRecord, ...]
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "goals", tuple(self.goals))


@dataclass(frozen=True)
class CohortStats:
    goal_count: int
    success_count: int

    @property
    def gsr(self) -> Fraction | None:
        if self.goal_count == 0:
            return None
        return Fraction(100 * self.success_count, self.goal_count)


@dataclass(frozen=True)
class BreakdownEntry:
    code: RcofCode
    count: int
    pct_of_goals: Fraction


@dataclass(frozen=True)
class AgreementReport:
    paired: int
    unpaired: int
    dialog_level_agreement: Fraction
    per_task: dict[str, Fraction]
    disagreement_counts: dict[str, int]


def round_pct(value: Fraction) -> float:
    """One-decimal percentage, round-half-up, computed exactly."""
    scaled = value * 10 + Fraction(1, 2)
    return (scaled.numerator // scaled.denominator) / 10


def segment_goals(a: DialogAnnotation) -> list[GoalSpan]:
    """Split an annotation into maximal runs opened by is_new_goal flags."""
    turns = sorted(a.turns, key=lambda t: t.turn_number)
    spans: list[GoalSpan] = []
    start = None
    for t in turns:
        opens = t.is_new_goal or start is None  # turn 1 always opens
        if opens:
            if start is not None:
                spans.append(
                    GoalSpan(a.dialog_id, len(spans) + 1, start, t.turn_number - 1)
                )
            start = t.turn_number
    if start is not None:
        spans.append(
            GoalSpan(a.dialog_id, len(spans) + 1, start, turns[-1].turn_number)
        )
    return spans


def goal_quality(span: GoalSpan, a: DialogAnnotation) -> Quality:
    """Success iff every turn in the span succeeded; any failed turn sinks
    the goal even if a later turn recovered."""
    for t in a.turns:
        if span.start_turn <= t.turn_number <= span.end_turn:
            if t.quality is Quality.FAILURE:
                return Quality.FAILURE
    return Quality.SUCCESS


def attribute_rcof(span: GoalSpan, a: DialogAnnotation) -> RcofCode:
    """RCOF of the earliest failed turn in the span."""
    failed = [
        t
        for t in a.turns
        if span.start_turn <= t.turn_number <= span.end_turn
        and t.quality is Quality.FAILURE
    ]
    if not failed:
        raise ValueError("attribute_rcof called on a span with no failed turn")
    earliest = min(failed, key=lambda t: t.turn_number)
    if earliest.rcof is None:
        raise MissingRcof(
            f"dialog {a.dialog_id} turn {earliest.turn_number} failed without rcof"
        )
    return earliest.rcof


def derive_goals(a: DialogAnnotation) -> list[GoalRecord]:
    records = []
    for span in segment_goals(a):
        quality = goal_quality(span, a)
        rcof = attribute_rcof(span, a) if quality is Quality.FAILURE else None
        records.append(
            GoalRecord(
                dialog_id=a.dialog_id,
                goal_index=span.goal_index,
                start_turn=span.start_turn,
                end_turn=span.end_turn,
                quality=quality,
                rcof=rcof,
            )
        )
    return records


def build_goal_set(annotations: Iterable[DialogAnnotation], source: str = "") -> GoalSet:
    goals: list[GoalRecord] = []
    for a in annotations:
        goals.extend(derive_goals(a))
    return GoalSet(goals=tuple(goals), source=source)


def compute_gsr(goals: GoalSet | Iterable[GoalRecord]) -> Fraction | None:
    """GSR as an exact percentage in [0, 100]; None when there are no goals
    (undefined, deliberately never 0)."""
    records = goals.goals if isinstance(goals, GoalSet) else tuple(goals)
    if not records:
        return None
    success = sum(1 for g in records if g.quality is Quality.SUCCESS)
    return Fraction(100 * success, len(records))


def failure_breakdown(
    goals: GoalSet | Iterable[GoalRecord],
) -> dict[RcofCode, BreakdownEntry]:
    """Failed-goal counts per canonical code, with zero-count codes included.

    pct_of_goals uses the total goal count as denominator (0 when the set
    is empty)."""
    records = goals.goals if isinstance(goals, GoalSet) else tuple(goals)
    total = len(records)
    counts = {code: 0 for code in RcofCode}
    for g in records:
        if g.quality is Quality.FAILURE:
            counts[g.rcof] += 1
    return {
        code: BreakdownEntry(
            code=code,
            count=count,
            pct_of_goals=Fraction(100 * count, total) if total else Fraction(0),
        )
        for code, count in counts.items()
    }


def turn_count_keyer(goal: GoalRecord) -> str:
    return "multi_turn" if goal.turn_count >= 2 else "single_turn"


def make_month_keyer(dialogs: Mapping[str, Dialog]) -> Callable[[GoalRecord], str]:
    """Cohort key = calendar month of the goal's first turn timestamp;
    goals without a timestamp fall into "undated"."""

    def keyer(goal: GoalRecord) -> str:
        dialog = dialogs.get(goal.dialog_id)
        if dialog is None:
            return "undated"
        for turn in dialog.turns:
            if turn.turn_number == goal.start_turn:
                if turn.timestamp is None:
                    return "undated"
                return f"{turn.timestamp.year:04d}-{turn.timestamp.month:02d}"
        return "undated"

    return keyer


def gsr_by_cohort(
    goals: GoalSet | Iterable[GoalRecord],
    keyer: Callable[[GoalRecord], str],
) -> dict[str, CohortStats]:
    records = goals.goals if isinstance(goals, GoalSet) else tuple(goals)
    counts: dict[str, list[int]] = {}
    for g in records:
        key = keyer(g)
        bucket = counts.setdefault(key, [0, 0])
        bucket[0] += 1
        if g.quality is Quality.SUCCESS:
            bucket[1] += 1
    return {
        key: CohortStats(goal_count=total, success_count=success)
        for key, (total, success) in sorted(counts.items())
    }


def _dialog_disagreements(
    model: DialogAnnotation, human: DialogAnnotation
) -> set[str]:
    """Tasks on which the two annotations of one dialog disagree."""
    tasks: set[str] = set()
    model_by_turn = {t.turn_number: t for t in model.turns}
    human_by_turn = {t.turn_number: t for t in human.turns}
    for n in sorted(set(model_by_turn) & set(human_by_turn)):
        m, h = model_by_turn[n], human_by_turn[n]
        if m.is_new_goal != h.is_new_goal:
            tasks.add("segmentation")
        if m.quality != h.quality:
            tasks.add("turn_quality")
        elif m.quality is Quality.FAILURE and m.rcof != h.rcof:
            # rcof compared only where both sides agree the turn failed
            tasks.add("rcof")
    return tasks


def agreement_stats(
    model_labels: Iterable[DialogAnnotation],
    human_labels: Iterable[DialogAnnotation],
) -> AgreementReport:
    """Dialog-level agreement between model and human label sets.

    A dialog agrees only if it has zero disagreements across all three
    tasks (segmentation, turn quality, rcof on commonly-failed turns).
    Unpaired dialogs are skipped and counted.
    """
    model_by_id = {a.dialog_id: a for a in model_labels}
    human_by_id = {a.dialog_id: a for a in human_labels}
    common = sorted(set(model_by_id) & set(human_by_id))
    unpaired = (len(model_by_id) - len(common)) + (len(human_by_id) - len(common))
    if not common:
        raise PairingError("no dialog_id appears in both label sets")

    task_counts = {"segmentation": 0, "turn_quality": 0, "rcof": 0}
    clean = 0
    for dialog_id in common:
        tasks = _dialog_disagreements(model_by_id[dialog_id], human_by_id[dialog_id])
        for task in tasks:
            task_counts[task] += 1
        if not tasks:
            clean += 1

    paired = len(common)
    return AgreementReport(
        paired=paired,
        unpaired=unpaired,
        dialog_level_agreement=Fraction(clean, paired),
        per_task={
            task: Fraction(paired - count, paired)
            for task, count in task_counts.items()
        },
        disagreement_counts=dict(task_counts),
    )
