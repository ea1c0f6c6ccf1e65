"""Shared builders and hypothesis strategies for the suite."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import hypothesis.strategies as st

from goaleval.dialog_model import (
    Device,
    Dialog,
    DialogAnnotation,
    ExplicitFeedback,
    FeedbackSignals,
    Provenance,
    Quality,
    RcofCode,
    Turn,
    TurnAnnotation,
)

BASE_TIME = datetime(2025, 1, 6, 9, 0, 0, tzinfo=timezone.utc)

# Mixed-script text keeps JSON round-trips honest without pathological
# control characters.
text_values = st.text(
    alphabet=st.characters(
        whitelist_categories=("L", "N", "P", "Zs"),
        whitelist_characters="äöüßéèñ中文😀\n",
    ),
    max_size=60,
)


def quick_dialog(dialog_id: str = "d-1", n: int = 1, **turn_kwargs) -> Dialog:
    turns = [
        Turn(
            turn_number=i + 1,
            user_msg=f"question {i + 1}",
            response=f"answer {i + 1}",
            **turn_kwargs,
        )
        for i in range(n)
    ]
    return Dialog(dialog_id=dialog_id, turns=tuple(turns))


def quick_annotation(
    dialog: Dialog,
    labels: list[tuple[bool, str, str | None]],
    provenance: Provenance | None = None,
) -> DialogAnnotation:
    """labels: one (is_new_goal, quality, rcof_wire_or_None) per turn."""
    assert len(labels) == len(dialog.turns)
    turns = [
        TurnAnnotation(
            turn_number=i + 1,
            is_new_goal=new_goal,
            quality=Quality(quality),
            rcof=RcofCode.from_wire(rcof) if rcof else None,
        )
        for i, (new_goal, quality, rcof) in enumerate(labels)
    ]
    return DialogAnnotation(
        dialog_id=dialog.dialog_id,
        turns=tuple(turns),
        provenance=provenance or Provenance.judge("test"),
    )


@st.composite
def feedback_signals(draw) -> FeedbackSignals:
    return FeedbackSignals(
        explicit=draw(st.sampled_from([None] + list(ExplicitFeedback))),
        rephrased=draw(st.booleans()),
        abandoned=draw(st.booleans()),
        switched_to_search=draw(st.booleans()),
        delayed_response=draw(st.booleans()),
    )


@st.composite
def turns_strategy(draw, turn_number: int) -> Turn:
    n_sources = draw(st.integers(min_value=0, max_value=3))
    urls = tuple(f"kb://doc/{draw(st.integers(0, 999))}-{i}" for i in range(n_sources))
    names = (
        tuple(draw(text_values) for _ in range(n_sources))
        if n_sources and draw(st.booleans())
        else ()
    )
    snippets = tuple(
        draw(st.text(max_size=256)) for _ in range(draw(st.integers(0, 2)))
    )
    timestamp = None
    if draw(st.booleans()):
        timestamp = BASE_TIME + timedelta(
            seconds=draw(st.integers(0, 10_000_000)),
            microseconds=draw(st.integers(0, 999_999)),
        )
    return Turn(
        turn_number=turn_number,
        user_msg=draw(text_values),
        response=draw(text_values),
        source_urls=urls,
        source_names=names,
        source_snippets=snippets,
        feedback=draw(st.none() | feedback_signals()),
        timestamp=timestamp,
        device=draw(st.sampled_from([None] + list(Device))),
    )


@st.composite
def dialogs_strategy(draw, min_turns: int = 1, max_turns: int = 5) -> Dialog:
    n = draw(st.integers(min_value=min_turns, max_value=max_turns))
    return Dialog(
        dialog_id=f"dlg-{draw(st.integers(0, 10**9))}",
        turns=tuple(draw(turns_strategy(i + 1)) for i in range(n)),
    )


# ---------------------------------------------------------------------------
# Reference fixtures reused by module tests and the acceptance suite
# ---------------------------------------------------------------------------

TABLE1_FAILURES: list[tuple[str, int]] = [
    ("E4", 164),
    ("E1", 116),
    ("E3", 70),
    ("E5", 43),
    ("E2", 17),
    ("E6", 10),
    ("E7", 7),
]
TABLE1_SUCCESS = 1488


def table1_label_set() -> list[DialogAnnotation]:
    """1915 goals: 1488 successes plus the reference failure counts, with
    failed goals shaped so earliest-failed-turn attribution is exercised
    (late extra failures, success prefixes/suffixes)."""
    annotations = []
    other = {"E4": "E1", "E1": "E3", "E3": "E5", "E5": "E2", "E2": "E6", "E6": "E7", "E7": "E4"}
    serial = 0

    def add(labels):
        nonlocal serial
        d = quick_dialog(dialog_id=f"t1-{serial}", n=len(labels))
        annotations.append(quick_annotation(d, labels))
        serial += 1

    for i in range(TABLE1_SUCCESS):
        if i % 3 == 0:
            add([(True, "success", None), (False, "success", None)])
        else:
            add([(True, "success", None)])
    for code, count in TABLE1_FAILURES:
        for i in range(count):
            variant = i % 4
            if variant == 0:
                add([(True, "failure", code)])
            elif variant == 1:
                add([(True, "failure", code), (False, "success", None)])
            elif variant == 2:
                # a later failure with a different code must not win
                add([(True, "failure", code), (False, "failure", other[code])])
            else:
                add([(True, "success", None), (False, "failure", code)])
    return annotations


def cohort_label_set() -> list[DialogAnnotation]:
    """200 multi-turn goals at 66.0% success and 300 single-turn at 86.0%,
    combining to exactly 78.0% overall."""
    annotations = []
    for i in range(200):
        ok = i < 132
        labels = [
            (True, "success", None),
            (False, "success" if ok else "failure", None if ok else "E4"),
        ]
        d = quick_dialog(dialog_id=f"multi-{i}", n=2)
        annotations.append(quick_annotation(d, labels))
    for i in range(300):
        ok = i < 258
        d = quick_dialog(dialog_id=f"single-{i}", n=1)
        annotations.append(
            quick_annotation(d, [(True, "success" if ok else "failure", None if ok else "E1")])
        )
    return annotations


AGREEMENT_SEG = range(0, 7)        # human flips a goal boundary
AGREEMENT_QUALITY = range(7, 13)   # human flips one turn's quality
AGREEMENT_RCOF = [*range(0, 5), *range(13, 25)]  # human changes one code


def agreement_label_sets() -> tuple[list[DialogAnnotation], list[DialogAnnotation]]:
    """100 paired dialogs; 25 perturbed overall (13 in segmentation or
    quality, 17 in rcof, 5 overlapping)."""
    base = [(True, "success", None), (False, "failure", "E1"), (False, "success", None)]
    model, human = [], []
    for i in range(100):
        d = quick_dialog(dialog_id=f"agree-{i}", n=3)
        model.append(quick_annotation(d, list(base)))
        perturbed = list(base)
        if i in AGREEMENT_SEG:
            perturbed[2] = (True, "success", None)
        if i in AGREEMENT_QUALITY:
            perturbed[2] = (perturbed[2][0], "failure", "E5")
        if i in AGREEMENT_RCOF:
            perturbed[1] = (False, "failure", "E4")
        human.append(
            quick_annotation(d, perturbed, provenance=Provenance.human(f"h{i}"))
        )
    return model, human


@st.composite
def annotations_strategy(draw, n_turns: int | None = None, dialog_id: str = "d-1"):
    """A valid annotation: turn 1 opens a goal, rcof present iff failure."""
    n = n_turns if n_turns is not None else draw(st.integers(1, 6))
    turns = []
    for i in range(n):
        quality = draw(st.sampled_from(Quality))
        rcof = draw(st.sampled_from(RcofCode)) if quality is Quality.FAILURE else None
        turns.append(
            TurnAnnotation(
                turn_number=i + 1,
                is_new_goal=True if i == 0 else draw(st.booleans()),
                quality=quality,
                rcof=rcof,
            )
        )
    return DialogAnnotation(
        dialog_id=dialog_id,
        turns=tuple(turns),
        provenance=Provenance.judge("gen"),
    )
