"""Pipeline orchestration: golden mock run, replay mode, resume, CLI."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from goaleval.aggregation import EscalationStore
from goaleval.cli import main
from goaleval.dialog_model import Dialog, Turn, serialize_dialog
from goaleval.ingestion import ConfigError
from goaleval.judge import default_template, render_prompt
from goaleval.llm_client import ModelEndpoint, request_digest
from goaleval.pipeline import PipelineConfig, config_digest, run_pipeline

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


def corpus_config(workdir: Path, **overrides) -> PipelineConfig:
    kwargs = dict(
        mode="mock",
        workdir=workdir,
        dialogs_path=FIXTURES / "corpus_50.jsonl",
        mock_rulesets=[FIXTURES / "mock_rules.json"],
    )
    kwargs.update(overrides)
    return PipelineConfig(**kwargs)


class TestMockRun:
    def test_matches_golden_report(self, tmp_path):
        run_pipeline(corpus_config(tmp_path))
        got = (tmp_path / "reports" / "report.json").read_bytes()
        assert got == (FIXTURES / "golden" / "report.json").read_bytes()

    def test_labels_match_golden(self, tmp_path):
        run_pipeline(corpus_config(tmp_path))
        got = (tmp_path / "labels.jsonl").read_bytes()
        assert got == (FIXTURES / "golden" / "labels.jsonl").read_bytes()

    def test_manifest_reconciles(self, tmp_path):
        run_pipeline(corpus_config(tmp_path))
        manifest = json.loads((tmp_path / "reports" / "run_manifest.json").read_text())
        counts = manifest["counts"]
        assert manifest["reconciles"] is True
        assert counts["dialogs_in"] == counts["verdict_groups"] == 50
        assert (
            counts["voted"] + counts["escalated"] + counts["judge_failed_dialogs"] == 50
        )

    def test_rerun_in_same_workdir_is_byte_identical(self, tmp_path):
        run_pipeline(corpus_config(tmp_path))
        first = (tmp_path / "reports" / "report.json").read_bytes()
        first_labels = (tmp_path / "labels.jsonl").read_bytes()
        run_pipeline(corpus_config(tmp_path))
        assert (tmp_path / "reports" / "report.json").read_bytes() == first
        assert (tmp_path / "labels.jsonl").read_bytes() == first_labels

    def test_resume_skips_judge_stage(self, tmp_path):
        run_pipeline(corpus_config(tmp_path))
        verdicts = tmp_path / "verdicts" / "mock-1.jsonl"
        stamp = verdicts.stat().st_mtime_ns
        run_pipeline(corpus_config(tmp_path), resume=True)
        assert verdicts.stat().st_mtime_ns == stamp

    def test_config_digest_independent_of_workdir(self, tmp_path):
        a = corpus_config(tmp_path / "a")
        b = corpus_config(tmp_path / "b")
        assert config_digest(a) == config_digest(b)


class TestDisagreementEscalation:
    def make_rulesets(self, tmp_path) -> list[Path]:
        # three judges that disagree 3-way on the rcof of timeout turns
        paths = []
        for name, code in (("a", "E5"), ("b", "E6"), ("c", "E1")):
            rules = [
                {"pattern": "request timed out", "field": "quality", "value": "failure",
                 "priority": 1, "target": "response"},
                {"pattern": "request timed out", "field": "rcof", "value": code,
                 "priority": 2, "target": "response"},
            ]
            path = tmp_path / f"rules-{name}.json"
            path.write_text(json.dumps(rules))
            paths.append(path)
        return paths

    def make_dialogs(self, tmp_path) -> Path:
        dialogs = [
            Dialog(
                dialog_id="clean-1",
                turns=(Turn(turn_number=1, user_msg="where is the gym", response="Building 2."),),
            ),
            Dialog(
                dialog_id="flaky-1",
                turns=(
                    Turn(
                        turn_number=1,
                        user_msg="open a ticket",
                        response="Error: the request timed out before completion.",
                    ),
                ),
            ),
        ]
        path = tmp_path / "dialogs.jsonl"
        path.write_text("".join(serialize_dialog(d) + "\n" for d in dialogs))
        return path

    def test_three_way_rcof_goes_to_queue(self, tmp_path):
        cfg = PipelineConfig(
            mode="mock",
            workdir=tmp_path,
            dialogs_path=self.make_dialogs(tmp_path),
            mock_rulesets=self.make_rulesets(tmp_path),
            mock_judge_ids=["a", "b", "c"],
        )
        run_pipeline(cfg)
        manifest = json.loads((tmp_path / "reports" / "run_manifest.json").read_text())
        assert manifest["counts"] == {
            "dialogs_in": 2,
            "verdict_groups": 2,
            "voted": 1,
            "escalated": 1,
            "judge_failed_dialogs": 0,
        }
        store = EscalationStore(tmp_path / "queue.jsonl")
        [item] = store.items("pending")
        assert item.dialog_id == "flaky-1"
        assert item.ambiguous_fields == ((1, "rcof"),)
        # rationales from all three judges ride along for the adjudicator
        assert len(item.verdicts) == 3


def judge_format_output(turns: list[dict], think: str) -> str:
    return f"<think>{think}</think>\n" + json.dumps({"dialog_id": "xx", "turns": turns})


class TestReplayRun:
    def setup_replay(self, tmp_path, judges=("alpha", "beta", "gamma")) -> PipelineConfig:
        dialogs = [
            Dialog(
                dialog_id="rp-1",
                turns=(
                    Turn(turn_number=1, user_msg="reset my badge", response="Done."),
                    Turn(turn_number=2, user_msg="and my password", response="Also done."),
                ),
            ),
        ]
        dialogs_path = tmp_path / "dialogs.jsonl"
        dialogs_path.write_text("".join(serialize_dialog(d) + "\n" for d in dialogs))

        template = default_template()
        prompt = render_prompt(dialogs[0], template)
        # judge outputs in the template's own format: yes/no plus prompt codes
        per_judge_turn2 = {
            "alpha": {"turn_number": 2, "is_new_goal": "no", "quality": "failure", "rcof": "E2"},
            "beta": {"turn_number": 2, "is_new_goal": "no", "quality": "failure", "rcof": "E2"},
            "gamma": {"turn_number": 2, "is_new_goal": "no", "quality": "success", "rcof": None},
        }
        cassette_path = tmp_path / "cassette.jsonl"
        with cassette_path.open("w") as fh:
            for judge in judges:
                raw = judge_format_output(
                    [
                        {"turn_number": 1, "is_new_goal": "yes", "quality": "success", "rcof": None},
                        per_judge_turn2[judge],
                    ],
                    think=f"{judge} reasoning",
                )
                fh.write(
                    json.dumps(
                        {
                            "digest": request_digest(judge, prompt),
                            "response": raw,
                            "latency_ms": 40,
                        }
                    )
                    + "\n"
                )
        endpoints = [
            ModelEndpoint(judge_id=j, base_url="http://unused.invalid/v1", model_name="m")
            for j in ("alpha", "beta", "gamma")
        ]
        return PipelineConfig(
            mode="replay",
            workdir=tmp_path,
            dialogs_path=dialogs_path,
            endpoints=endpoints,
            cassette_path=cassette_path,
        )

    def test_replay_votes_and_translates_codes(self, tmp_path):
        cfg = self.setup_replay(tmp_path)
        report = run_pipeline(cfg)
        # majority says turn 2 failed; prompt code E2 maps to canonical E4
        labels = json.loads((tmp_path / "labels.jsonl").read_text().strip())
        assert labels["turns"][1]["quality"] == "failure"
        assert labels["turns"][1]["rcof"] == "E4"
        assert labels["provenance"]["kind"] == "vote"
        assert report.goal_count == 1

    def test_replay_reruns_byte_identical(self, tmp_path):
        cfg = self.setup_replay(tmp_path)
        run_pipeline(cfg)
        first = (tmp_path / "reports" / "report.json").read_bytes()
        run_pipeline(cfg)
        assert (tmp_path / "reports" / "report.json").read_bytes() == first

    def test_degraded_ensemble_completes_with_two_verdicts(self, tmp_path):
        cfg = self.setup_replay(tmp_path, judges=("alpha", "beta"))  # gamma missing
        run_pipeline(cfg)
        manifest = json.loads((tmp_path / "reports" / "run_manifest.json").read_text())
        assert manifest["counts"]["voted"] == 1
        assert manifest["counts"]["judge_failed_dialogs"] == 0
        assert manifest["judge_failures"] == {"gamma": 1}
        labels = json.loads((tmp_path / "labels.jsonl").read_text().strip())
        assert labels["provenance"]["judge_ids"] == ["alpha", "beta"]


class TestConfig:
    def test_mock_requires_ruleset(self, tmp_path):
        with pytest.raises(ConfigError):
            PipelineConfig(mode="mock", workdir=tmp_path, mock_rulesets=[])

    def test_replay_requires_cassette(self, tmp_path):
        endpoint = ModelEndpoint(judge_id="j", base_url="u", model_name="m")
        with pytest.raises(ConfigError):
            PipelineConfig(mode="replay", workdir=tmp_path, endpoints=[endpoint])

    def test_from_file_resolves_relative_paths(self, tmp_path):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(
            json.dumps(
                {
                    "mode": "mock",
                    "paths": {"dialogs": "corpus.jsonl", "labels": "out/labels.jsonl"},
                    "mock": {"rulesets": ["rules.json"]},
                    "session_gap": "2h",
                }
            )
        )
        cfg = PipelineConfig.from_file(cfg_path)
        assert cfg.workdir == tmp_path
        assert cfg.resolve(cfg.dialogs_path) == tmp_path / "corpus.jsonl"
        assert cfg.session_gap.total_seconds() == 7200
        assert cfg.mock_judge_ids == ["mock-1", "mock-2", "mock-3"]


class TestCli:
    def test_full_stage_chain(self, tmp_path, capsys):
        events = tmp_path / "events.jsonl"
        lines = []
        for i, (kind, payload) in enumerate(
            [
                ("user_message", "how do I submit my expense report?"),
                ("bot_response", "No results found for your query."),
                ("user_message", "trying again"),
                ("bot_response", "You can do that in the Expenses portal."),
            ]
        ):
            lines.append(
                json.dumps(
                    {
                        "session_id": "s1",
                        "event_time": f"2025-02-01T09:0{i}:00Z",
                        "kind": kind,
                        "payload": payload,
                        "metadata": {},
                    }
                )
            )
        events.write_text("\n".join(lines) + "\n")

        dialogs = tmp_path / "dialogs.jsonl"
        assert main(["ingest", "--events", str(events), "--gap", "4h", "--out", str(dialogs)]) == 0
        assert dialogs.exists()

        verdicts = tmp_path / "verdicts"
        assert (
            main(
                [
                    "judge",
                    "--dialogs", str(dialogs),
                    "--verdicts-dir", str(verdicts),
                    "--mode", "mock",
                    "--rulesets", str(FIXTURES / "mock_rules.json"),
                ]
            )
            == 0
        )
        assert (verdicts / "mock-1.jsonl").exists()

        labels = tmp_path / "labels.jsonl"
        queue = tmp_path / "queue.jsonl"
        assert (
            main(
                [
                    "vote",
                    "--dialogs", str(dialogs),
                    "--verdicts", str(verdicts),
                    "--out", str(labels),
                    "--queue", str(queue),
                ]
            )
            == 0
        )
        assert labels.exists()

        out_dir = tmp_path / "reports"
        assert (
            main(
                [
                    "metrics",
                    "--labels", str(labels),
                    "--dialogs", str(dialogs),
                    "--out-dir", str(out_dir),
                ]
            )
            == 0
        )
        report = json.loads((out_dir / "report.json").read_text())
        assert report["goals"]["total"] >= 1

        assert (
            main(["report", "--labels", str(labels), "--format", "markdown"]) == 0
        )
        output = capsys.readouterr().out
        assert "| Metric | Count | % of Goals |" in output

    def test_run_command_with_config(self, tmp_path, capsys):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(
            json.dumps(
                {
                    "mode": "mock",
                    "paths": {"dialogs": str(FIXTURES / "corpus_50.jsonl")},
                    "mock": {"rulesets": [str(FIXTURES / "mock_rules.json")]},
                }
            )
        )
        assert main(["run", "--config", str(cfg_path)]) == 0
        assert (tmp_path / "reports" / "report.json").exists()
        assert "pipeline complete" in capsys.readouterr().out

    def test_config_error_exit_code(self, tmp_path):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps({"mode": "mock", "mock": {"rulesets": []}}))
        assert main(["run", "--config", str(cfg_path)]) == 2

    def test_malformed_ruleset_exit_code(self, tmp_path):
        bad = tmp_path / "bad_rules.json"
        bad.write_text(json.dumps([{"pattern": "x", "value": "yes"}]))
        dialogs = tmp_path / "dialogs.jsonl"
        dialogs.write_text(
            serialize_dialog(
                Dialog(dialog_id="d", turns=(Turn(turn_number=1, user_msg="q", response="r"),))
            )
            + "\n"
        )
        code = main(
            [
                "judge",
                "--dialogs", str(dialogs),
                "--verdicts-dir", str(tmp_path / "v"),
                "--mode", "mock",
                "--rulesets", str(bad),
            ]
        )
        assert code == 2

    def test_stage_error_exit_code(self, tmp_path):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(
            json.dumps(
                {
                    "mode": "mock",
                    "paths": {"dialogs": "missing.jsonl"},
                    "mock": {"rulesets": [str(FIXTURES / "mock_rules.json")]},
                }
            )
        )
        assert main(["run", "--config", str(cfg_path)]) == 1
