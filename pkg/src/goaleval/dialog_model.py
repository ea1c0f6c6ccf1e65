"""Canonical data model for chatbot sessions, per-turn judgments, and goals.

Owns the dialog JSON wire schema, the stored annotation format (one JSON
object per line, typed booleans), and the yes/no encoding used by judge
output. All types are immutable after construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any

SNIPPET_MAX_CHARS = 256

# Wire key order, fixed for deterministic serialization.
_TURN_KEYS = (
    "turn_number",
    "user_msg",
    "response",
    "source_urls",
    "source_names",
    "source_snippets",
)
_TURN_OPTIONAL_KEYS = ("feedback", "timestamp", "device")
_FEEDBACK_KEYS = (
    "explicit",
    "rephrased",
    "abandoned",
    "switched_to_search",
    "delayed_response",
)


class SchemaError(Exception):
    """A dialog JSON document violates the wire schema."""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class AnnotationMismatch(Exception):
    """An annotation does not fit its dialog or breaks a label rule.

    ``kind`` is one of: missing_turn, extra_turn, rcof_on_success,
    missing_rcof, first_turn_not_new_goal.
    """

    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind
        self.detail = detail
        super().__init__(f"{kind}: {detail}" if detail else kind)


class Quality(Enum):
    SUCCESS = "success"
    FAILURE = "failure"


class Device(Enum):
    DESKTOP = "desktop"
    MOBILE = "mobile"
    UNKNOWN = "unknown"


class ExplicitFeedback(Enum):
    THUMBS_UP = "thumbs_up"
    THUMBS_DOWN = "thumbs_down"
    LIKE = "like"
    RESHARE = "reshare"


class RcofCode(Enum):
    """Root-cause-of-failure codes; wire form is the bare "E1".."E7" string."""

    E1_LANGUAGE_UNDERSTANDING = "E1"
    E2_REFUSAL = "E2"
    E3_INCORRECT_RETRIEVAL = "E3"
    E4_RETRIEVAL_FAILURE = "E4"
    E5_SYSTEM_ERROR = "E5"
    E6_INCORRECT_ROUTING = "E6"
    E7_OUT_OF_DOMAIN = "E7"

    @property
    def label(self) -> str:
        return _RCOF_LABELS[self]

    @classmethod
    def from_wire(cls, value: str) -> "RcofCode":
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown RCOF code {value!r}") from None


_RCOF_LABELS = {
    RcofCode.E1_LANGUAGE_UNDERSTANDING: "Language Understanding",
    RcofCode.E2_REFUSAL: "Refusal",
    RcofCode.E3_INCORRECT_RETRIEVAL: "Incorrect Retrieval",
    RcofCode.E4_RETRIEVAL_FAILURE: "Retrieval Failure",
    RcofCode.E5_SYSTEM_ERROR: "System Error",
    RcofCode.E6_INCORRECT_ROUTING: "Incorrect Routing",
    RcofCode.E7_OUT_OF_DOMAIN: "Out-of-Domain Query",
}


@dataclass(frozen=True)
class FeedbackSignals:
    explicit: ExplicitFeedback | None = None
    rephrased: bool = False
    abandoned: bool = False
    switched_to_search: bool = False
    delayed_response: bool = False


@dataclass(frozen=True)
class Turn:
    turn_number: int
    user_msg: str
    response: str
    source_urls: tuple[str, ...] = ()
    source_names: tuple[str, ...] = ()
    source_snippets: tuple[str, ...] = ()
    feedback: FeedbackSignals | None = None
    timestamp: datetime | None = None
    device: Device | None = None

    def __post_init__(self):
        object.__setattr__(self, "source_urls", tuple(self.source_urls))
        object.__setattr__(self, "source_names", tuple(self.source_names))
        object.__setattr__(self, "source_snippets", tuple(self.source_snippets))
        if self.turn_number < 1:
            raise ValueError(f"turn_number must be >= 1, got {self.turn_number}")
        for i, snippet in enumerate(self.source_snippets):
            if len(snippet) > SNIPPET_MAX_CHARS:
                raise ValueError(
                    f"source_snippets[{i}] exceeds {SNIPPET_MAX_CHARS} characters"
                )
        if self.source_names and len(self.source_names) != len(self.source_urls):
            raise ValueError("source_names must be empty or match source_urls length")


@dataclass(frozen=True)
class Dialog:
    dialog_id: str
    turns: tuple[Turn, ...]

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if not self.dialog_id:
            raise ValueError("dialog_id must be non-empty")
        if not self.turns:
            raise ValueError("dialog must have at least one turn")
        for i, turn in enumerate(self.turns):
            if turn.turn_number != i + 1:
                raise ValueError(
                    f"turns[{i}].turn_number is {turn.turn_number}, expected {i + 1}"
                )

    @property
    def is_multi_turn(self) -> bool:
        return len(self.turns) >= 2


@dataclass(frozen=True)
class TurnAnnotation:
    turn_number: int
    is_new_goal: bool
    quality: Quality
    rcof: RcofCode | None = None
    rationale: str | None = None

    def __post_init__(self):
        if self.turn_number < 1:
            raise ValueError(f"turn_number must be >= 1, got {self.turn_number}")


@dataclass(frozen=True)
class Provenance:
    """Who produced an annotation: a single judge, a vote, or a human."""

    kind: str  # "judge" | "vote" | "human"
    judge_id: str | None = None
    judge_ids: tuple[str, ...] = ()
    annotator_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "judge_ids", tuple(self.judge_ids))
        if self.kind not in ("judge", "vote", "human"):
            raise ValueError(f"unknown provenance kind {self.kind!r}")

    @classmethod
    def judge(cls, judge_id: str) -> "Provenance":
        return cls(kind="judge", judge_id=judge_id)

    @classmethod
    def vote(cls, judge_ids) -> "Provenance":
        return cls(kind="vote", judge_ids=tuple(judge_ids))

    @classmethod
    def human(cls, annotator_id: str) -> "Provenance":
        return cls(kind="human", annotator_id=annotator_id)


@dataclass(frozen=True)
class DialogAnnotation:
    dialog_id: str
    turns: tuple[TurnAnnotation, ...]
    provenance: Provenance

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if not self.dialog_id:
            raise ValueError("dialog_id must be non-empty")

    def turn(self, turn_number: int) -> TurnAnnotation:
        for t in self.turns:
            if t.turn_number == turn_number:
                return t
        raise KeyError(turn_number)

    def label_key(self) -> tuple:
        """Comparable summary of the labels only (ignores rationale/provenance)."""
        return tuple(
            (t.turn_number, t.is_new_goal, t.quality, t.rcof) for t in self.turns
        )


@dataclass(frozen=True)
class GoalRecord:
    dialog_id: str
    goal_index: int
    start_turn: int
    end_turn: int
    quality: Quality
    rcof: RcofCode | None = None
    turn_count: int = field(default=0)

    def __post_init__(self):
        if self.goal_index < 1:
            raise ValueError("goal_index is 1-based")
        if self.start_turn > self.end_turn:
            raise ValueError("start_turn must be <= end_turn")
        expected = self.end_turn - self.start_turn + 1
        if self.turn_count == 0:
            object.__setattr__(self, "turn_count", expected)
        elif self.turn_count != expected:
            raise ValueError(
                f"turn_count {self.turn_count} != span length {expected}"
            )
        if (self.rcof is not None) != (self.quality is Quality.FAILURE):
            raise ValueError("rcof must be present iff quality is failure")

    @property
    def is_multi_turn(self) -> bool:
        return self.turn_count >= 2


# ---------------------------------------------------------------------------
# Dialog wire format
# ---------------------------------------------------------------------------


def _require(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise SchemaError(f"{path}.{key}" if path else key, "missing required field")
    return obj[key]


def _as_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(path, f"expected string, got {type(value).__name__}")
    return value


def _as_str_list(value: Any, path: str) -> list[str]:
    if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
        raise SchemaError(path, "expected list of strings")
    return value


def _parse_timestamp(value: Any, path: str) -> datetime:
    text = _as_str(value, path)
    # Python 3.10 fromisoformat does not accept a trailing Z.
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        raise SchemaError(path, f"invalid timestamp {value!r}") from None


def _parse_feedback(value: Any, path: str, strict: bool) -> FeedbackSignals:
    if not isinstance(value, dict):
        raise SchemaError(path, "expected object")
    if strict:
        unknown = set(value) - set(_FEEDBACK_KEYS)
        if unknown:
            raise SchemaError(f"{path}.{sorted(unknown)[0]}", "unknown field")
    explicit = None
    raw_explicit = value.get("explicit")
    if raw_explicit is not None:
        try:
            explicit = ExplicitFeedback(_as_str(raw_explicit, f"{path}.explicit"))
        except ValueError:
            if strict:
                raise SchemaError(
                    f"{path}.explicit", f"unknown feedback kind {raw_explicit!r}"
                ) from None
            explicit = None
    flags = {}
    for key in _FEEDBACK_KEYS[1:]:
        raw = value.get(key, False)
        if not isinstance(raw, bool):
            raise SchemaError(f"{path}.{key}", "expected boolean")
        flags[key] = raw
    return FeedbackSignals(explicit=explicit, **flags)


def _parse_turn(obj: Any, index: int, strict: bool) -> Turn:
    path = f"turns[{index}]"
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected object")
    if strict:
        unknown = set(obj) - set(_TURN_KEYS) - set(_TURN_OPTIONAL_KEYS)
        if unknown:
            raise SchemaError(f"{path}.{sorted(unknown)[0]}", "unknown field")

    turn_number = _require(obj, "turn_number", path)
    if not isinstance(turn_number, int) or isinstance(turn_number, bool):
        raise SchemaError(f"{path}.turn_number", "expected integer")
    if turn_number != index + 1:
        raise SchemaError(f"{path}.turn_number", f"expected {index + 1}")

    user_msg = _as_str(_require(obj, "user_msg", path), f"{path}.user_msg")
    response = _as_str(_require(obj, "response", path), f"{path}.response")
    urls = _as_str_list(_require(obj, "source_urls", path), f"{path}.source_urls")
    names = _as_str_list(_require(obj, "source_names", path), f"{path}.source_names")
    snippets = _as_str_list(
        _require(obj, "source_snippets", path), f"{path}.source_snippets"
    )

    for j, snippet in enumerate(snippets):
        if len(snippet) > SNIPPET_MAX_CHARS:
            if strict:
                raise SchemaError(
                    f"{path}.source_snippets[{j}]",
                    f"exceeds {SNIPPET_MAX_CHARS} characters",
                )
            snippets[j] = snippet[:SNIPPET_MAX_CHARS]
    if names and len(names) != len(urls):
        if strict:
            raise SchemaError(
                f"{path}.source_names", "length mismatch with source_urls"
            )
        names = []

    feedback = None
    if obj.get("feedback") is not None:
        feedback = _parse_feedback(obj["feedback"], f"{path}.feedback", strict)
    timestamp = None
    if obj.get("timestamp") is not None:
        timestamp = _parse_timestamp(obj["timestamp"], f"{path}.timestamp")
    device = None
    if obj.get("device") is not None:
        raw_device = _as_str(obj["device"], f"{path}.device")
        try:
            device = Device(raw_device)
        except ValueError:
            if strict:
                raise SchemaError(
                    f"{path}.device", f"unknown device {raw_device!r}"
                ) from None
            device = Device.UNKNOWN

    return Turn(
        turn_number=turn_number,
        user_msg=user_msg,
        response=response,
        source_urls=tuple(urls),
        source_names=tuple(names),
        source_snippets=tuple(snippets),
        feedback=feedback,
        timestamp=timestamp,
        device=device,
    )


def dialog_from_dict(obj: Any, strict: bool = True) -> Dialog:
    if not isinstance(obj, dict):
        raise SchemaError("", "expected top-level object")
    if strict:
        unknown = set(obj) - {"dialog_id", "turns"}
        if unknown:
            raise SchemaError(sorted(unknown)[0], "unknown field")
    dialog_id = _as_str(_require(obj, "dialog_id", ""), "dialog_id")
    if not dialog_id:
        raise SchemaError("dialog_id", "must be non-empty")
    raw_turns = _require(obj, "turns", "")
    if not isinstance(raw_turns, list) or not raw_turns:
        raise SchemaError("turns", "expected non-empty list")
    turns = [_parse_turn(t, i, strict) for i, t in enumerate(raw_turns)]
    return Dialog(dialog_id=dialog_id, turns=tuple(turns))


def parse_dialog(raw: str, strict: bool = True) -> Dialog:
    """Parse one dialog JSON document.

    Strict mode rejects unknown fields and over-length snippets; lenient
    mode ignores unknowns and truncates snippets to the 256-char cap.
    """
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"invalid JSON: {exc}") from exc
    return dialog_from_dict(obj, strict=strict)


def _feedback_to_dict(fb: FeedbackSignals) -> dict:
    return {
        "explicit": fb.explicit.value if fb.explicit else None,
        "rephrased": fb.rephrased,
        "abandoned": fb.abandoned,
        "switched_to_search": fb.switched_to_search,
        "delayed_response": fb.delayed_response,
    }


def dialog_to_dict(d: Dialog) -> dict:
    turns = []
    for t in d.turns:
        obj = {
            "turn_number": t.turn_number,
            "user_msg": t.user_msg,
            "response": t.response,
            "source_urls": list(t.source_urls),
            "source_names": list(t.source_names),
            "source_snippets": list(t.source_snippets),
        }
        if t.feedback is not None:
            obj["feedback"] = _feedback_to_dict(t.feedback)
        if t.timestamp is not None:
            obj["timestamp"] = t.timestamp.isoformat()
        if t.device is not None:
            obj["device"] = t.device.value
        turns.append(obj)
    return {"dialog_id": d.dialog_id, "turns": turns}


def serialize_dialog(d: Dialog) -> str:
    """Emit the dialog as a single JSON line with fixed key order.

    Empty citation lists stay as explicit empty arrays so diffs are
    deterministic; parse_dialog(serialize_dialog(d)) == d.
    """
    return json.dumps(dialog_to_dict(d), ensure_ascii=False)


# ---------------------------------------------------------------------------
# Stored annotation format (JSONL, typed booleans)
# ---------------------------------------------------------------------------


def yes_no(value: bool) -> str:
    return "yes" if value else "no"


def parse_yes_no(value: Any) -> bool:
    """Decode the judge-output boolean encoding ("yes"/"no")."""
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered == "yes":
            return True
        if lowered == "no":
            return False
    raise ValueError(f"expected yes/no, got {value!r}")


def annotation_to_dict(a: DialogAnnotation) -> dict:
    prov: dict[str, Any] = {"kind": a.provenance.kind}
    if a.provenance.kind == "judge":
        prov["judge_id"] = a.provenance.judge_id
    elif a.provenance.kind == "vote":
        prov["judge_ids"] = list(a.provenance.judge_ids)
    else:
        prov["annotator_id"] = a.provenance.annotator_id
    return {
        "dialog_id": a.dialog_id,
        "turns": [
            {
                "turn_number": t.turn_number,
                "is_new_goal": t.is_new_goal,
                "quality": t.quality.value,
                "rcof": t.rcof.value if t.rcof else None,
                "rationale": t.rationale,
            }
            for t in a.turns
        ],
        "provenance": prov,
    }


def annotation_from_dict(obj: dict) -> DialogAnnotation:
    dialog_id = _as_str(_require(obj, "dialog_id", ""), "dialog_id")
    raw_turns = _require(obj, "turns", "")
    if not isinstance(raw_turns, list):
        raise SchemaError("turns", "expected list")
    turns = []
    for i, t in enumerate(raw_turns):
        path = f"turns[{i}]"
        if not isinstance(t, dict):
            raise SchemaError(path, "expected object")
        rcof = None
        if t.get("rcof") is not None:
            try:
                rcof = RcofCode.from_wire(_as_str(t["rcof"], f"{path}.rcof"))
            except ValueError as exc:
                raise SchemaError(f"{path}.rcof", str(exc)) from None
        is_new_goal = t.get("is_new_goal")
        if not isinstance(is_new_goal, bool):
            raise SchemaError(f"{path}.is_new_goal", "expected boolean")
        try:
            quality = Quality(_as_str(_require(t, "quality", path), f"{path}.quality"))
        except ValueError:
            raise SchemaError(f"{path}.quality", "expected success/failure") from None
        turn_number = _require(t, "turn_number", path)
        if not isinstance(turn_number, int) or isinstance(turn_number, bool):
            raise SchemaError(f"{path}.turn_number", "expected integer")
        turns.append(
            TurnAnnotation(
                turn_number=turn_number,
                is_new_goal=is_new_goal,
                quality=quality,
                rcof=rcof,
                rationale=t.get("rationale"),
            )
        )
    raw_prov = _require(obj, "provenance", "")
    if not isinstance(raw_prov, dict):
        raise SchemaError("provenance", "expected object")
    kind = _as_str(_require(raw_prov, "kind", "provenance"), "provenance.kind")
    if kind == "judge":
        prov = Provenance.judge(raw_prov.get("judge_id") or "unknown")
    elif kind == "vote":
        prov = Provenance.vote(raw_prov.get("judge_ids") or ())
    elif kind == "human":
        prov = Provenance.human(raw_prov.get("annotator_id") or "unknown")
    else:
        raise SchemaError("provenance.kind", f"unknown kind {kind!r}")
    return DialogAnnotation(dialog_id=dialog_id, turns=tuple(turns), provenance=prov)


def serialize_annotation(a: DialogAnnotation) -> str:
    return json.dumps(annotation_to_dict(a), ensure_ascii=False)


def parse_annotation(raw: str) -> DialogAnnotation:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaError("", "expected top-level object")
    return annotation_from_dict(obj)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_annotation(d: Dialog, a: DialogAnnotation) -> None:
    """Check that ``a`` covers exactly ``d``'s turns and obeys label rules.

    Raises AnnotationMismatch; callers are responsible for pairing by
    dialog_id.
    """
    expected = {t.turn_number for t in d.turns}
    seen: set[int] = set()
    for t in a.turns:
        if t.turn_number in seen or t.turn_number not in expected:
            raise AnnotationMismatch(
                "extra_turn", f"turn {t.turn_number} not in dialog or duplicated"
            )
        seen.add(t.turn_number)
    missing = expected - seen
    if missing:
        raise AnnotationMismatch("missing_turn", f"turns {sorted(missing)} missing")
    for t in a.turns:
        if t.quality is Quality.SUCCESS and t.rcof is not None:
            raise AnnotationMismatch(
                "rcof_on_success", f"turn {t.turn_number} has rcof {t.rcof.value}"
            )
        if t.quality is Quality.FAILURE and t.rcof is None:
            raise AnnotationMismatch(
                "missing_rcof", f"turn {t.turn_number} failed without rcof"
            )
        if t.turn_number == 1 and not t.is_new_goal:
            raise AnnotationMismatch(
                "first_turn_not_new_goal", "turn 1 must start a goal"
            )
