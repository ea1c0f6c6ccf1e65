"""Report assembly and the three render formats."""

from __future__ import annotations

import csv
import io
import json
from fractions import Fraction

import pytest

from conftest import cohort_label_set, table1_label_set
from goaleval.report import (
    build_report,
    render_report,
    render_trend_csv,
    report_to_dict,
    round_half_up,
)


@pytest.fixture(scope="module")
def table1_report():
    return build_report(table1_label_set())


class TestMarkdown:
    def test_table_rows(self, table1_report):
        md = render_report(table1_report, "markdown")
        assert "| Total Goals (sample) | 1915 | 100% |" in md
        assert "| Successful Goals | 1488 | 77.7% |" in md
        assert "| Failed Goals | 427 | 22.3% |" in md
        assert "| Retrieval Failure (E4) | 164 | 8.6% |" in md
        assert "| Language Understanding (E1) | 116 | 6.1% |" in md
        assert "Top failure root causes:" in md

    def test_empty_report(self):
        md = render_report(build_report([]), "markdown")
        assert "GSR: undefined (0 goals)" in md
        assert "Top failure root causes:" not in md


class TestJson:
    def test_structure(self, table1_report):
        obj = json.loads(render_report(table1_report, "json"))
        assert obj["goals"] == {"total": 1915, "successful": 1488, "failed": 427}
        assert obj["gsr"]["pct"] == 77.7
        assert obj["gsr"]["raw"] == [29760, 383]  # reduced 148800/1915
        assert obj["gsr"]["undefined"] is False
        top = obj["failure_breakdown"][0]
        assert top["code"] == "E4" and top["count"] == 164 and top["pct_of_goals"] == 8.6
        assert len(obj["failure_breakdown"]) == 7  # zero-count codes included

    def test_undefined_gsr(self):
        obj = report_to_dict(build_report([]))
        assert obj["gsr"] == {"pct": None, "raw": None, "undefined": True}


class TestCsv:
    def test_parse_back_equals_json(self, table1_report):
        obj = report_to_dict(table1_report)
        rows = list(csv.DictReader(io.StringIO(render_report(table1_report, "csv"))))
        by_metric = {r["metric"]: r for r in rows}
        assert int(by_metric["total_goals"]["count"]) == obj["goals"]["total"]
        assert float(by_metric["successful_goals"]["pct"]) == obj["gsr"]["pct"]
        assert int(by_metric["failed_goals"]["count"]) == obj["goals"]["failed"]
        for entry in obj["failure_breakdown"]:
            row = by_metric[f"rcof_{entry['code']}"]
            assert int(row["count"]) == entry["count"]
            assert float(row["pct"]) == entry["pct_of_goals"]

    def test_undefined_marker(self):
        rows = list(csv.DictReader(io.StringIO(render_report(build_report([]), "csv"))))
        by_metric = {r["metric"]: r for r in rows}
        assert by_metric["successful_goals"]["pct"] == "NA"


class TestCohortsInReport:
    def test_turn_count_cohorts(self):
        obj = report_to_dict(build_report(cohort_label_set()))
        multi = obj["cohorts"]["turn_count"]["multi_turn"]
        single = obj["cohorts"]["turn_count"]["single_turn"]
        assert multi["gsr_pct"] == 66.0
        assert single["gsr_pct"] == 86.0
        assert obj["gsr"]["pct"] == 78.0


class TestTrend:
    def test_trend_csv(self):
        from datetime import datetime, timezone

        from conftest import quick_annotation
        from goaleval.dialog_model import Dialog, Turn

        dialogs, labels = [], []
        for i, month in enumerate([10, 10, 11]):
            d = Dialog(
                dialog_id=f"m-{i}",
                turns=(
                    Turn(
                        turn_number=1,
                        user_msg="q",
                        response="r",
                        timestamp=datetime(2024, month, 5, tzinfo=timezone.utc),
                    ),
                ),
            )
            dialogs.append(d)
            labels.append(
                quick_annotation(d, [(True, "success" if i != 1 else "failure", None if i != 1 else "E4")])
            )
        report = build_report(labels, dialogs=dialogs)
        text = render_trend_csv(report)
        rows = list(csv.DictReader(io.StringIO(text)))
        assert [r["month"] for r in rows] == ["2024-10", "2024-11"]
        assert rows[0]["gsr_pct"] == "50.0"
        assert rows[1]["gsr_pct"] == "100.0"
        obj = report_to_dict(report)
        assert obj["trend"][0] == {"month": "2024-10", "goal_count": 2, "gsr_pct": 50.0}

    def test_undated_not_in_trend(self):
        from conftest import quick_annotation, quick_dialog

        d = quick_dialog(n=1)  # no timestamps
        report = build_report([quick_annotation(d, [(True, "success", None)])], dialogs=[d])
        assert report_to_dict(report)["trend"] == []
        assert "undated" in report.cohorts_month


def test_round_half_up_two_decimals():
    assert round_half_up(Fraction(17, 640) * 100, 2) == 2.66
    assert round_half_up(Fraction(9, 1000) * 100, 2) == 0.9
    assert round_half_up(Fraction(1, 8) * 100, 2) == 12.5
    assert round_half_up(Fraction(1, 3), 2) == 0.33


def test_unknown_format_rejected(table1_report):
    with pytest.raises(ValueError):
        render_report(table1_report, "xml")
