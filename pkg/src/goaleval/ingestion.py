"""Event-log ingestion: link raw events into dialogs, sample, and rate feedback.

Raw events arrive as newline-delimited JSON and may be out of order;
linking sorts per session, pairs user/bot messages into turns, splits on
long silences, and attaches feedback events to the preceding turn.
"""

from __future__ import annotations

import json
import re
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from fractions import Fraction
from pathlib import Path
from random import Random
from typing import Iterable, Iterator

from .dialog_model import (
    Device,
    Dialog,
    ExplicitFeedback,
    FeedbackSignals,
    SchemaError,
    Turn,
)

# Fixed namespace so split dialog ids are reproducible across runs/platforms.
_DIALOG_ID_NAMESPACE = uuid.UUID("6ba7b810-9dad-11d1-80b4-00c04fd430c8")

_IMPLICIT_FLAGS = ("rephrased", "abandoned", "switched_to_search", "delayed_response")


class ConfigError(Exception):
    pass


class EventKind(Enum):
    USER_MESSAGE = "user_message"
    BOT_RESPONSE = "bot_response"
    FEEDBACK_EVENT = "feedback_event"


_KIND_RANK = {
    EventKind.USER_MESSAGE: 0,
    EventKind.BOT_RESPONSE: 1,
    EventKind.FEEDBACK_EVENT: 2,
}


@dataclass(frozen=True)
class RawEvent:
    session_id: str
    event_time: datetime
    kind: EventKind
    payload: str
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class IngestWarning:
    kind: str  # orphan_bot_response | unpaired_user_message | orphan_feedback | bad_citations
    session_id: str
    event_time: datetime
    detail: str = ""


@dataclass(frozen=True)
class SamplingConfig:
    total: int
    multi_turn_weight: float = 3.0
    session_gap: timedelta = timedelta(hours=4)
    seed: int = 0

    def __post_init__(self):
        if self.total < 1:
            raise ConfigError("total must be positive")
        if self.multi_turn_weight < 1:
            raise ConfigError("multi_turn_weight must be >= 1")


@dataclass(frozen=True)
class FeedbackRates:
    single_turn_negative_rate: Fraction
    multi_turn_negative_rate: Fraction
    multi_turn_share: Fraction
    single_turn_count: int
    multi_turn_count: int
    single_turn_empty: bool
    multi_turn_empty: bool


def parse_duration(text: str) -> timedelta:
    """Parse durations like "4h", "30m", "90s", "2d", or bare seconds."""
    match = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*([smhd]?)\s*", text)
    if not match:
        raise ConfigError(f"cannot parse duration {text!r}")
    value = float(match.group(1))
    unit = match.group(2) or "s"
    seconds = value * {"s": 1, "m": 60, "h": 3600, "d": 86400}[unit]
    return timedelta(seconds=seconds)


def parse_raw_event(raw: str) -> RawEvent:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"invalid JSON: {exc}") from exc
    for key in ("session_id", "event_time", "kind", "payload"):
        if key not in obj:
            raise SchemaError(key, "missing required field")
    try:
        kind = EventKind(obj["kind"])
    except ValueError:
        raise SchemaError("kind", f"unknown event kind {obj['kind']!r}") from None
    text = str(obj["event_time"])
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        event_time = datetime.fromisoformat(text)
    except ValueError:
        raise SchemaError("event_time", f"invalid timestamp {obj['event_time']!r}") from None
    metadata = obj.get("metadata") or {}
    if not isinstance(metadata, dict):
        raise SchemaError("metadata", "expected object")
    return RawEvent(
        session_id=str(obj["session_id"]),
        event_time=event_time,
        kind=kind,
        payload=str(obj["payload"]),
        metadata={str(k): str(v) for k, v in metadata.items()},
    )


def load_events(path: Path) -> Iterator[RawEvent]:
    """Load events from a JSONL file or every *.jsonl file in a directory."""
    path = Path(path)
    files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
    for file in files:
        with file.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield parse_raw_event(line)


def _citations(event: RawEvent, warnings: list[IngestWarning]) -> tuple[tuple, tuple, tuple]:
    raw = event.metadata.get("citations")
    if not raw:
        return (), (), ()
    try:
        obj = json.loads(raw)
        urls = tuple(str(u) for u in obj.get("urls", ()))
        names = tuple(str(n) for n in obj.get("names", ()))
        snippets = tuple(str(s)[:256] for s in obj.get("snippets", ()))
        if names and len(names) != len(urls):
            names = ()
        return urls, names, snippets
    except (json.JSONDecodeError, AttributeError):
        warnings.append(
            IngestWarning("bad_citations", event.session_id, event.event_time)
        )
        return (), (), ()


def _merge_feedback(current: FeedbackSignals | None, kind: str) -> FeedbackSignals:
    fb = current or FeedbackSignals()
    if kind in _IMPLICIT_FLAGS:
        return FeedbackSignals(
            explicit=fb.explicit,
            **{flag: (getattr(fb, flag) or flag == kind) for flag in _IMPLICIT_FLAGS},
        )
    try:
        explicit = ExplicitFeedback(kind)
    except ValueError:
        return fb  # unknown feedback kinds are ignored
    return FeedbackSignals(
        explicit=explicit,
        rephrased=fb.rephrased,
        abandoned=fb.abandoned,
        switched_to_search=fb.switched_to_search,
        delayed_response=fb.delayed_response,
    )


def _device(event: RawEvent) -> Device | None:
    raw = event.metadata.get("device")
    if raw is None:
        return None
    try:
        return Device(raw)
    except ValueError:
        return Device.UNKNOWN


def _segment_to_dialog(
    session_id: str,
    index: int,
    events: list[RawEvent],
    warnings: list[IngestWarning],
) -> Dialog | None:
    turns: list[Turn] = []
    feedback: dict[int, FeedbackSignals] = {}
    pending: RawEvent | None = None
    for event in events:
        if event.kind is EventKind.USER_MESSAGE:
            if pending is not None:
                warnings.append(
                    IngestWarning(
                        "unpaired_user_message", session_id, pending.event_time
                    )
                )
            pending = event
        elif event.kind is EventKind.BOT_RESPONSE:
            if pending is None:
                warnings.append(
                    IngestWarning("orphan_bot_response", session_id, event.event_time)
                )
                continue
            urls, names, snippets = _citations(event, warnings)
            turns.append(
                Turn(
                    turn_number=len(turns) + 1,
                    user_msg=pending.payload,
                    response=event.payload,
                    source_urls=urls,
                    source_names=names,
                    source_snippets=snippets,
                    timestamp=pending.event_time,
                    device=_device(pending),
                )
            )
            pending = None
        else:  # feedback attaches to the most recent completed turn
            if not turns:
                warnings.append(
                    IngestWarning("orphan_feedback", session_id, event.event_time)
                )
                continue
            n = turns[-1].turn_number
            feedback[n] = _merge_feedback(
                feedback.get(n), event.metadata.get("feedback", "")
            )
    if pending is not None:
        warnings.append(
            IngestWarning("unpaired_user_message", session_id, pending.event_time)
        )
    if not turns:
        return None
    turns = [
        Turn(
            turn_number=t.turn_number,
            user_msg=t.user_msg,
            response=t.response,
            source_urls=t.source_urls,
            source_names=t.source_names,
            source_snippets=t.source_snippets,
            feedback=feedback.get(t.turn_number),
            timestamp=t.timestamp,
            device=t.device,
        )
        for t in turns
    ]
    dialog_id = str(uuid.uuid5(_DIALOG_ID_NAMESPACE, f"{session_id}#{index}"))
    return Dialog(dialog_id=dialog_id, turns=tuple(turns))


def link_events(
    events: Iterable[RawEvent], gap: timedelta = timedelta(hours=4)
) -> tuple[list[Dialog], list[IngestWarning]]:
    """Group events by session, sort, pair turns, and split on silences > gap.

    Events are fully ordered by (time, kind, payload) so shuffled input
    produces identical output. Orphans are reported as warnings, never
    fatal. Dialog ids are derived deterministically from session id and
    split index.
    """
    sessions: dict[str, list[RawEvent]] = {}
    for event in events:
        sessions.setdefault(event.session_id, []).append(event)

    dialogs: list[Dialog] = []
    warnings: list[IngestWarning] = []
    for session_id in sorted(sessions):
        ordered = sorted(
            sessions[session_id],
            key=lambda e: (e.event_time, _KIND_RANK[e.kind], e.payload),
        )
        segments: list[list[RawEvent]] = [[]]
        for event in ordered:
            if segments[-1] and event.event_time - segments[-1][-1].event_time > gap:
                segments.append([])
            segments[-1].append(event)
        index = 0
        for segment in segments:
            dialog = _segment_to_dialog(session_id, index, segment, warnings)
            if dialog is not None:
                dialogs.append(dialog)
                index += 1
    return dialogs, warnings


def stratified_sample(dialogs: list[Dialog], cfg: SamplingConfig) -> list[Dialog]:
    """Weighted sample without replacement, oversampling multi-turn dialogs.

    Uses exponential-key weighted reservoir selection: each dialog draws
    one uniform variate (in list order, from the seeded RNG) and the
    cfg.total largest u**(1/w) keys win; output is draw order.
    """
    if cfg.total > len(dialogs):
        raise ConfigError(
            f"sample total {cfg.total} exceeds population {len(dialogs)}"
        )
    rng = Random(cfg.seed)
    keyed = []
    for i, d in enumerate(dialogs):
        weight = cfg.multi_turn_weight if d.is_multi_turn else 1.0
        u = rng.random()
        keyed.append((u ** (1.0 / weight), -i, d))
    keyed.sort(reverse=True)
    return [d for _, _, d in keyed[: cfg.total]]


def _is_negative(d: Dialog) -> bool:
    return any(
        t.feedback is not None and t.feedback.explicit is ExplicitFeedback.THUMBS_DOWN
        for t in d.turns
    )


def feedback_rates(dialogs: list[Dialog]) -> FeedbackRates:
    """Per-cohort negative-feedback rates and the multi-turn share.

    Negative = the dialog contains at least one thumbs_down. Empty cohorts
    report rate 0 with the matching *_empty flag set.
    """
    single = [d for d in dialogs if not d.is_multi_turn]
    multi = [d for d in dialogs if d.is_multi_turn]

    def rate(cohort: list[Dialog]) -> Fraction:
        if not cohort:
            return Fraction(0)
        return Fraction(sum(1 for d in cohort if _is_negative(d)), len(cohort))

    total = len(dialogs)
    return FeedbackRates(
        single_turn_negative_rate=rate(single),
        multi_turn_negative_rate=rate(multi),
        multi_turn_share=Fraction(len(multi), total) if total else Fraction(0),
        single_turn_count=len(single),
        multi_turn_count=len(multi),
        single_turn_empty=not single,
        multi_turn_empty=not multi,
    )
