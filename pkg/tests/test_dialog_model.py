"""Schema, round-trip, and annotation-validation behavior."""

from __future__ import annotations

import json
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings

from conftest import dialogs_strategy, quick_annotation, quick_dialog
from goaleval.dialog_model import (
    AnnotationMismatch,
    Device,
    Dialog,
    DialogAnnotation,
    ExplicitFeedback,
    FeedbackSignals,
    Provenance,
    Quality,
    RcofCode,
    SchemaError,
    Turn,
    TurnAnnotation,
    annotation_from_dict,
    annotation_to_dict,
    parse_dialog,
    parse_yes_no,
    serialize_dialog,
    validate_annotation,
)

MINIMAL = json.dumps(
    {
        "dialog_id": "8f14e45f-ceea-4f01-9fc2-1c5ad2d1b12a",
        "turns": [
            {
                "turn_number": 1,
                "user_msg": "Where do I submit expenses?",
                "response": "Use the expenses portal.",
                "source_urls": [],
                "source_names": [],
                "source_snippets": [],
            }
        ],
    }
)


class TestParseDialog:
    def test_minimal_one_turn(self):
        d = parse_dialog(MINIMAL)
        assert d.dialog_id == "8f14e45f-ceea-4f01-9fc2-1c5ad2d1b12a"
        assert len(d.turns) == 1
        assert d.turns[0].user_msg == "Where do I submit expenses?"
        assert d.turns[0].source_urls == ()

    def test_out_of_order_turns_rejected(self):
        obj = json.loads(MINIMAL)
        obj["turns"] = [
            dict(obj["turns"][0], turn_number=2),
            dict(obj["turns"][0], turn_number=1),
        ]
        with pytest.raises(SchemaError) as exc:
            parse_dialog(json.dumps(obj))
        assert exc.value.path == "turns[0].turn_number"
        assert exc.value.reason == "expected 1"

    def test_missing_field(self):
        obj = json.loads(MINIMAL)
        del obj["turns"][0]["response"]
        with pytest.raises(SchemaError) as exc:
            parse_dialog(json.dumps(obj))
        assert "response" in exc.value.path

    def test_wrong_type(self):
        obj = json.loads(MINIMAL)
        obj["turns"][0]["user_msg"] = 7
        with pytest.raises(SchemaError):
            parse_dialog(json.dumps(obj))

    def test_strict_rejects_unknown_field(self):
        obj = json.loads(MINIMAL)
        obj["turns"][0]["surprise"] = "x"
        with pytest.raises(SchemaError) as exc:
            parse_dialog(json.dumps(obj))
        assert "surprise" in exc.value.path
        assert parse_dialog(json.dumps(obj), strict=False).turns[0].user_msg

    def test_strict_rejects_long_snippet_lenient_truncates(self):
        obj = json.loads(MINIMAL)
        obj["turns"][0]["source_snippets"] = ["x" * 300]
        with pytest.raises(SchemaError) as exc:
            parse_dialog(json.dumps(obj))
        assert "source_snippets[0]" in exc.value.path
        lenient = parse_dialog(json.dumps(obj), strict=False)
        assert len(lenient.turns[0].source_snippets[0]) == 256

    def test_snippet_at_cap_accepted(self):
        obj = json.loads(MINIMAL)
        obj["turns"][0]["source_snippets"] = ["x" * 256]
        assert parse_dialog(json.dumps(obj)).turns[0].source_snippets[0] == "x" * 256

    def test_names_length_mismatch(self):
        obj = json.loads(MINIMAL)
        obj["turns"][0]["source_urls"] = ["kb://a", "kb://b"]
        obj["turns"][0]["source_names"] = ["only one"]
        with pytest.raises(SchemaError):
            parse_dialog(json.dumps(obj))
        assert parse_dialog(json.dumps(obj), strict=False).turns[0].source_names == ()

    def test_empty_turns_rejected(self):
        with pytest.raises(SchemaError):
            parse_dialog(json.dumps({"dialog_id": "d", "turns": []}))

    def test_timestamp_with_z_suffix(self):
        obj = json.loads(MINIMAL)
        obj["turns"][0]["timestamp"] = "2025-03-01T12:00:00Z"
        d = parse_dialog(json.dumps(obj))
        assert d.turns[0].timestamp == datetime(2025, 3, 1, 12, tzinfo=timezone.utc)


class TestSerializeDialog:
    def test_contains_turn_number_key(self):
        text = serialize_dialog(quick_dialog())
        assert '"turn_number": 1' in text

    def test_empty_lists_explicit(self):
        text = serialize_dialog(quick_dialog())
        assert '"source_urls": []' in text
        assert '"source_names": []' in text
        assert '"source_snippets": []' in text

    def test_key_order_matches_schema(self):
        obj = json.loads(serialize_dialog(quick_dialog()))
        assert list(obj) == ["dialog_id", "turns"]
        assert list(obj["turns"][0]) == [
            "turn_number",
            "user_msg",
            "response",
            "source_urls",
            "source_names",
            "source_snippets",
        ]

    def test_single_line(self):
        assert "\n" not in serialize_dialog(quick_dialog(n=3))

    def test_feedback_and_device_round_trip(self):
        d = quick_dialog(
            feedback=FeedbackSignals(explicit=ExplicitFeedback.THUMBS_DOWN, rephrased=True),
            device=Device.MOBILE,
            timestamp=datetime(2025, 2, 2, 8, 30, tzinfo=timezone.utc),
        )
        assert parse_dialog(serialize_dialog(d)) == d

    @settings(max_examples=150)
    @given(dialogs_strategy())
    def test_round_trip_property(self, d):
        assert parse_dialog(serialize_dialog(d)) == d

    def test_round_trip_seeded_corpus(self):
        # fixed mini-corpus: parse(serialize(parse(serialize(d)))) is stable
        from random import Random

        rng = Random(7)
        for i in range(50):
            n = rng.randint(1, 5)
            d = quick_dialog(dialog_id=f"c-{i}", n=n)
            once = parse_dialog(serialize_dialog(d))
            assert parse_dialog(serialize_dialog(once)) == once == d


class TestConstruction:
    def test_turn_numbering_gap_rejected(self):
        with pytest.raises(ValueError):
            Dialog(
                dialog_id="d",
                turns=(
                    Turn(turn_number=1, user_msg="a", response="b"),
                    Turn(turn_number=3, user_msg="c", response="d"),
                ),
            )

    def test_empty_dialog_id_rejected(self):
        with pytest.raises(ValueError):
            Dialog(dialog_id="", turns=(Turn(turn_number=1, user_msg="a", response="b"),))

    def test_goal_record_invariants(self):
        from goaleval.dialog_model import GoalRecord

        g = GoalRecord(
            dialog_id="d", goal_index=1, start_turn=2, end_turn=4, quality=Quality.SUCCESS
        )
        assert g.turn_count == 3
        with pytest.raises(ValueError):
            GoalRecord(
                dialog_id="d", goal_index=1, start_turn=3, end_turn=2, quality=Quality.SUCCESS
            )
        with pytest.raises(ValueError):
            GoalRecord(
                dialog_id="d",
                goal_index=1,
                start_turn=1,
                end_turn=1,
                quality=Quality.SUCCESS,
                rcof=RcofCode.E1_LANGUAGE_UNDERSTANDING,
            )
        with pytest.raises(ValueError):
            GoalRecord(
                dialog_id="d", goal_index=1, start_turn=1, end_turn=1, quality=Quality.FAILURE
            )


class TestValidateAnnotation:
    def test_conforming(self):
        d = quick_dialog(n=3)
        a = quick_annotation(
            d,
            [(True, "success", None), (False, "failure", "E4"), (True, "success", None)],
        )
        validate_annotation(d, a)  # must not raise

    def test_rcof_on_success(self):
        d = quick_dialog(n=2)
        a = quick_annotation(d, [(True, "success", None), (False, "success", None)])
        bad = DialogAnnotation(
            dialog_id=a.dialog_id,
            turns=(
                a.turns[0],
                TurnAnnotation(
                    turn_number=2,
                    is_new_goal=False,
                    quality=Quality.SUCCESS,
                    rcof=RcofCode.E4_RETRIEVAL_FAILURE,
                ),
            ),
            provenance=a.provenance,
        )
        with pytest.raises(AnnotationMismatch) as exc:
            validate_annotation(d, bad)
        assert exc.value.kind == "rcof_on_success"

    def test_missing_rcof(self):
        d = quick_dialog(n=1)
        bad = DialogAnnotation(
            dialog_id=d.dialog_id,
            turns=(
                TurnAnnotation(turn_number=1, is_new_goal=True, quality=Quality.FAILURE),
            ),
            provenance=Provenance.judge("t"),
        )
        with pytest.raises(AnnotationMismatch) as exc:
            validate_annotation(d, bad)
        assert exc.value.kind == "missing_rcof"

    def test_missing_turn(self):
        d = quick_dialog(n=3)
        a = quick_annotation(
            d,
            [(True, "success", None), (False, "success", None), (False, "success", None)],
        )
        partial = DialogAnnotation(
            dialog_id=a.dialog_id, turns=a.turns[:2], provenance=a.provenance
        )
        with pytest.raises(AnnotationMismatch) as exc:
            validate_annotation(d, partial)
        assert exc.value.kind == "missing_turn"

    def test_extra_turn(self):
        d = quick_dialog(n=1)
        a = quick_annotation(d, [(True, "success", None)])
        extra = DialogAnnotation(
            dialog_id=a.dialog_id,
            turns=a.turns
            + (
                TurnAnnotation(turn_number=2, is_new_goal=False, quality=Quality.SUCCESS),
            ),
            provenance=a.provenance,
        )
        with pytest.raises(AnnotationMismatch) as exc:
            validate_annotation(d, extra)
        assert exc.value.kind == "extra_turn"

    def test_first_turn_rule(self):
        d = quick_dialog(n=1)
        bad = DialogAnnotation(
            dialog_id=d.dialog_id,
            turns=(
                TurnAnnotation(turn_number=1, is_new_goal=False, quality=Quality.SUCCESS),
            ),
            provenance=Provenance.judge("t"),
        )
        with pytest.raises(AnnotationMismatch) as exc:
            validate_annotation(d, bad)
        assert exc.value.kind == "first_turn_not_new_goal"


class TestAnnotationWire:
    def test_round_trip(self):
        d = quick_dialog(n=2)
        a = quick_annotation(
            d,
            [(True, "success", None), (False, "failure", "E3")],
            provenance=Provenance.vote(["a", "b", "c"]),
        )
        assert annotation_from_dict(annotation_to_dict(a)) == a

    def test_wire_uses_typed_booleans_and_codes(self):
        d = quick_dialog(n=1)
        a = quick_annotation(d, [(True, "failure", "E2")])
        obj = annotation_to_dict(a)
        assert obj["turns"][0]["is_new_goal"] is True
        assert obj["turns"][0]["quality"] == "failure"
        assert obj["turns"][0]["rcof"] == "E2"

    def test_human_provenance(self):
        d = quick_dialog(n=1)
        a = quick_annotation(
            d, [(True, "success", None)], provenance=Provenance.human("alex")
        )
        obj = annotation_to_dict(a)
        assert obj["provenance"] == {"kind": "human", "annotator_id": "alex"}

    def test_parse_yes_no(self):
        assert parse_yes_no("yes") is True
        assert parse_yes_no("No") is False
        assert parse_yes_no(True) is True
        with pytest.raises(ValueError):
            parse_yes_no("maybe")


def test_rcof_wire_codes():
    assert [c.value for c in RcofCode] == ["E1", "E2", "E3", "E4", "E5", "E6", "E7"]
    assert RcofCode.from_wire("E4") is RcofCode.E4_RETRIEVAL_FAILURE
    with pytest.raises(ValueError):
        RcofCode.from_wire("E8")
