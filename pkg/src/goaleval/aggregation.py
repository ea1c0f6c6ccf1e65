"""Majority voting over judge verdicts, the escalation queue, and label storage.

Voting is per turn, per field. Fields without a strict majority carry an
``undecided`` sentinel inside a provisional annotation; the sentinel never
leaves this module except embedded in escalation items, and resolved items
always produce fully-decided annotations.
"""

from __future__ import annotations

import hashlib
import json
import threading
from collections import Counter
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Union

from .dialog_model import (
    AnnotationMismatch,
    Dialog,
    DialogAnnotation,
    Provenance,
    Quality,
    RcofCode,
    TurnAnnotation,
    annotation_from_dict,
    annotation_to_dict,
    dialog_from_dict,
    dialog_to_dict,
    validate_annotation,
)
from .judge import JudgeFailure, JudgeVerdict


class _Sentinel(Enum):
    UNDECIDED = "undecided"


#: Placeholder for a field with no strict-majority label.
UNDECIDED = _Sentinel.UNDECIDED

VOTABLE_FIELDS = ("is_new_goal", "quality", "rcof")


class VoteError(Exception):
    pass


class StoreError(Exception):
    pass


class NotFound(Exception):
    pass


class AlreadyResolved(Exception):
    pass


@dataclass(frozen=True)
class VotedTurn:
    turn_number: int
    is_new_goal: Union[bool, _Sentinel]
    quality: Union[Quality, _Sentinel]
    rcof: Union[RcofCode, None, _Sentinel]


@dataclass(frozen=True)
class ProvisionalAnnotation:
    """A voted annotation that may still contain undecided fields."""

    dialog_id: str
    turns: tuple[VotedTurn, ...]

    @property
    def is_complete(self) -> bool:
        return not any(
            turn.is_new_goal is UNDECIDED
            or turn.quality is UNDECIDED
            or turn.rcof is UNDECIDED
            for turn in self.turns
        )

    def to_annotation(self, provenance: Provenance) -> DialogAnnotation:
        if not self.is_complete:
            raise VoteError("annotation still has undecided fields")
        return DialogAnnotation(
            dialog_id=self.dialog_id,
            turns=tuple(
                TurnAnnotation(
                    turn_number=t.turn_number,
                    is_new_goal=t.is_new_goal,
                    quality=t.quality,
                    rcof=t.rcof,
                )
                for t in self.turns
            ),
            provenance=provenance,
        )

    def to_wire(self) -> dict:
        def encode(value):
            if value is UNDECIDED:
                return "undecided"
            if isinstance(value, Quality):
                return value.value
            if isinstance(value, RcofCode):
                return value.value
            return value

        return {
            "dialog_id": self.dialog_id,
            "turns": [
                {
                    "turn_number": t.turn_number,
                    "is_new_goal": encode(t.is_new_goal),
                    "quality": encode(t.quality),
                    "rcof": encode(t.rcof),
                }
                for t in self.turns
            ],
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "ProvisionalAnnotation":
        def decode(value, kind):
            if value == "undecided":
                return UNDECIDED
            if kind == "quality":
                return Quality(value)
            if kind == "rcof":
                return RcofCode.from_wire(value) if value is not None else None
            return bool(value)

        return cls(
            dialog_id=obj["dialog_id"],
            turns=tuple(
                VotedTurn(
                    turn_number=t["turn_number"],
                    is_new_goal=decode(t["is_new_goal"], "is_new_goal"),
                    quality=decode(t["quality"], "quality"),
                    rcof=decode(t["rcof"], "rcof"),
                )
                for t in obj["turns"]
            ),
        )


@dataclass(frozen=True)
class VoteResult:
    dialog_id: str
    voted: ProvisionalAnnotation
    ambiguous_fields: tuple[tuple[int, str], ...]
    judge_count: int
    unanimous: bool


def _strict_majority(votes: list, electorate: int):
    """The label with > electorate/2 votes, else UNDECIDED."""
    if not votes:
        return UNDECIDED
    value, count = Counter(votes).most_common(1)[0]
    return value if 2 * count > electorate else UNDECIDED


def majority_vote(verdicts: list[JudgeVerdict], d: Dialog) -> VoteResult:
    """Vote usable verdicts per turn, per field, independently.

    rcof is voted only among the judges that marked the turn a failure.
    After voting, the first-turn rule is re-imposed and rcof presence is
    normalized: a leaked code under a success vote is cleared; a failure
    vote with no rcof majority is flagged ambiguous, never defaulted. When
    quality itself is undecided, rcof is left empty for the adjudicator.
    """
    if len(verdicts) < 2:
        raise VoteError(
            f"insufficient_verdicts: need >= 2 usable verdicts, got {len(verdicts)}"
        )
    k = len(verdicts)
    voted_turns: list[VotedTurn] = []
    ambiguous: list[tuple[int, str]] = []
    for turn in d.turns:
        n = turn.turn_number
        labels = [v.annotation.turn(n) for v in verdicts]

        is_new_goal = _strict_majority([a.is_new_goal for a in labels], k)
        if n == 1:
            is_new_goal = True
        elif is_new_goal is UNDECIDED:
            ambiguous.append((n, "is_new_goal"))

        quality = _strict_majority([a.quality for a in labels], k)
        if quality is UNDECIDED:
            ambiguous.append((n, "quality"))
            rcof: Union[RcofCode, None, _Sentinel] = None
        elif quality is Quality.FAILURE:
            electorate = [a.rcof for a in labels if a.quality is Quality.FAILURE]
            rcof = _strict_majority(electorate, len(electorate))
            if rcof is UNDECIDED:
                ambiguous.append((n, "rcof"))
        else:
            rcof = None
        voted_turns.append(VotedTurn(n, is_new_goal, quality, rcof))

    first_key = verdicts[0].annotation.label_key()
    unanimous = all(v.annotation.label_key() == first_key for v in verdicts)
    return VoteResult(
        dialog_id=d.dialog_id,
        voted=ProvisionalAnnotation(dialog_id=d.dialog_id, turns=tuple(voted_turns)),
        ambiguous_fields=tuple(ambiguous),
        judge_count=k,
        unanimous=unanimous,
    )


def voted_annotation(result: VoteResult, judge_ids: Iterable[str]) -> DialogAnnotation:
    """Materialize a clean vote as a storable annotation."""
    return result.voted.to_annotation(Provenance.vote(tuple(judge_ids)))


# ---------------------------------------------------------------------------
# Escalation queue
# ---------------------------------------------------------------------------

VerdictOrFailure = Union[JudgeVerdict, JudgeFailure]


@dataclass(frozen=True)
class EscalationItem:
    item_id: str
    dialog_id: str
    dialog: Dialog
    verdicts: tuple[VerdictOrFailure, ...]
    voted: ProvisionalAnnotation
    ambiguous_fields: tuple[tuple[int, str], ...]
    status: str = "pending"  # pending | resolved
    resolution: DialogAnnotation | None = None
    annotator_id: str | None = None
    resolved_at: str | None = None
    enqueued_at: str | None = None
    sop_ref: str | None = None

    def __post_init__(self):
        if (self.status == "resolved") != (self.resolution is not None):
            raise ValueError("status resolved iff resolution present")


def escalation_item_id(
    dialog_id: str, ambiguous_fields: Iterable[tuple[int, str]]
) -> str:
    canonical = json.dumps(
        [dialog_id, sorted([n, f] for n, f in ambiguous_fields)], sort_keys=True
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _verdict_to_wire(v: VerdictOrFailure) -> dict:
    if isinstance(v, JudgeVerdict):
        return {
            "judge_id": v.judge_id,
            "annotation": annotation_to_dict(v.annotation),
            "think_text": v.think_text,
            "raw": v.raw,
            "latency": v.latency,
            "error": None,
        }
    return {
        "judge_id": v.judge_id,
        "annotation": None,
        "think_text": None,
        "raw": v.raw,
        "latency": v.latency,
        "error": v.error,
    }


def _verdict_from_wire(obj: dict) -> VerdictOrFailure:
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


def item_to_wire(item: EscalationItem) -> dict:
    return {
        "item_id": item.item_id,
        "dialog_id": item.dialog_id,
        "dialog": dialog_to_dict(item.dialog),
        "verdicts": [_verdict_to_wire(v) for v in item.verdicts],
        "voted": item.voted.to_wire(),
        "ambiguous_fields": [[n, f] for n, f in item.ambiguous_fields],
        "status": item.status,
        "resolution": annotation_to_dict(item.resolution) if item.resolution else None,
        "annotator_id": item.annotator_id,
        "resolved_at": item.resolved_at,
        "enqueued_at": item.enqueued_at,
        "sop_ref": item.sop_ref,
    }


def item_from_wire(obj: dict) -> EscalationItem:
    return EscalationItem(
        item_id=obj["item_id"],
        dialog_id=obj["dialog_id"],
        dialog=dialog_from_dict(obj["dialog"], strict=False),
        verdicts=tuple(_verdict_from_wire(v) for v in obj["verdicts"]),
        voted=ProvisionalAnnotation.from_wire(obj["voted"]),
        ambiguous_fields=tuple((n, f) for n, f in obj["ambiguous_fields"]),
        status=obj.get("status", "pending"),
        resolution=(
            annotation_from_dict(obj["resolution"]) if obj.get("resolution") else None
        ),
        annotator_id=obj.get("annotator_id"),
        resolved_at=obj.get("resolved_at"),
        enqueued_at=obj.get("enqueued_at"),
        sop_ref=obj.get("sop_ref"),
    )


class EscalationStore:
    """Append-only JSONL journal of queue state transitions.

    The in-memory index is rebuilt from the journal on open; one writer,
    many readers; resolutions are serialized per item via a store lock.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._items: dict[str, EscalationItem] = {}
        self._order: list[str] = []
        self._lock = threading.Lock()
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    event = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise StoreError(f"{self.path}:{lineno}: invalid JSON: {exc}") from exc
                if event.get("event") == "enqueue":
                    item = item_from_wire(event["item"])
                    if item.item_id not in self._items:
                        self._order.append(item.item_id)
                    self._items[item.item_id] = item
                elif event.get("event") == "resolve":
                    item_id = event["item_id"]
                    if item_id not in self._items:
                        raise StoreError(
                            f"{self.path}:{lineno}: resolve for unknown item {item_id}"
                        )
                    self._items[item_id] = replace(
                        self._items[item_id],
                        status="resolved",
                        resolution=annotation_from_dict(event["resolution"]),
                        annotator_id=event.get("annotator_id"),
                        resolved_at=event.get("resolved_at"),
                    )
                else:
                    raise StoreError(
                        f"{self.path}:{lineno}: unknown event {event.get('event')!r}"
                    )

    def _append(self, event: dict) -> None:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, ensure_ascii=False) + "\n")
                fh.flush()
        except OSError as exc:
            raise StoreError(f"cannot append to {self.path}: {exc}") from exc

    def enqueue(self, item: EscalationItem) -> bool:
        """Append the item unless its digest is already journaled (no-op)."""
        with self._lock:
            if item.item_id in self._items:
                return False
            self._items[item.item_id] = item
            self._order.append(item.item_id)
            self._append({"event": "enqueue", "item": item_to_wire(item)})
            return True

    def get(self, item_id: str) -> EscalationItem:
        item = self._items.get(item_id)
        if item is None:
            raise NotFound(item_id)
        return item

    def items(self, status: str | None = None) -> list[EscalationItem]:
        ordered = [self._items[i] for i in self._order]
        if status is None:
            return ordered
        return [i for i in ordered if i.status == status]

    def resolve(
        self,
        item_id: str,
        resolution: DialogAnnotation,
        annotator_id: str,
        resolved_at: str | None = None,
    ) -> EscalationItem:
        """Compare-and-set pending -> resolved; the human annotation wins on
        every field and is re-validated against the stored dialog."""
        with self._lock:
            item = self._items.get(item_id)
            if item is None:
                raise NotFound(item_id)
            if item.status == "resolved":
                raise AlreadyResolved(item_id)
            if resolution.dialog_id != item.dialog_id:
                raise AnnotationMismatch(
                    "dialog_id_mismatch",
                    f"resolution targets {resolution.dialog_id}, item holds {item.dialog_id}",
                )
            final = DialogAnnotation(
                dialog_id=item.dialog_id,
                turns=resolution.turns,
                provenance=Provenance.human(annotator_id),
            )
            validate_annotation(item.dialog, final)
            stamp = resolved_at or datetime.now(timezone.utc).isoformat()
            updated = replace(
                item,
                status="resolved",
                resolution=final,
                annotator_id=annotator_id,
                resolved_at=stamp,
            )
            self._items[item_id] = updated
            self._append(
                {
                    "event": "resolve",
                    "item_id": item_id,
                    "resolution": annotation_to_dict(final),
                    "annotator_id": annotator_id,
                    "resolved_at": stamp,
                }
            )
            return updated


class LabelStore:
    """JSONL store of final annotations; the last line per dialog_id wins."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, annotation: DialogAnnotation) -> None:
        with self._lock:
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(
                        json.dumps(annotation_to_dict(annotation), ensure_ascii=False)
                        + "\n"
                    )
                    fh.flush()
            except OSError as exc:
                raise StoreError(f"cannot append to {self.path}: {exc}") from exc

    def load(self) -> list[DialogAnnotation]:
        if not self.path.exists():
            return []
        labels = []
        with self.path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    labels.append(annotation_from_dict(json.loads(line)))
        return labels

    def latest(self) -> dict[str, DialogAnnotation]:
        merged: dict[str, DialogAnnotation] = {}
        for annotation in self.load():
            merged[annotation.dialog_id] = annotation
        return merged


def enqueue_ambiguous(
    result: VoteResult,
    verdicts: Iterable[VerdictOrFailure],
    d: Dialog,
    store: EscalationStore,
    sop_ref: str | None = None,
    enqueued_at: str | None = None,
) -> list[EscalationItem]:
    """Queue one item per dialog with ambiguity, carrying every judge's
    rationale for the adjudicator. Idempotent on (dialog_id, fields)."""
    if not result.ambiguous_fields:
        return []
    item_id = escalation_item_id(result.dialog_id, result.ambiguous_fields)
    item = EscalationItem(
        item_id=item_id,
        dialog_id=result.dialog_id,
        dialog=d,
        verdicts=tuple(verdicts),
        voted=result.voted,
        ambiguous_fields=result.ambiguous_fields,
        status="pending",
        enqueued_at=enqueued_at,
        sop_ref=sop_ref,
    )
    store.enqueue(item)
    return [store.get(item_id)]


def apply_resolution(
    store: EscalationStore,
    label_store: LabelStore,
    item_id: str,
    resolution: DialogAnnotation,
    annotator_id: str,
    resolved_at: str | None = None,
) -> DialogAnnotation:
    """Resolve a pending item and append the binding human label."""
    item = store.resolve(item_id, resolution, annotator_id, resolved_at=resolved_at)
    label_store.append(item.resolution)
    return item.resolution
