#!/usr/bin/env python3
"""Run the full mock pipeline on the bundled corpus into ./out.

Handy for eyeballing every artifact the pipeline produces (dialogs,
verdicts, labels, queue, reports, manifest) without any network access.

Usage: python scripts/run_mock_pipeline.py [out_dir]
"""

from __future__ import annotations

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from goaleval.pipeline import PipelineConfig, run_pipeline
from goaleval.report import render_report


def main() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "out"
    out.mkdir(parents=True, exist_ok=True)
    cfg = PipelineConfig(
        mode="mock",
        workdir=out,
        dialogs_path=ROOT / "fixtures" / "corpus_50.jsonl",
        mock_rulesets=[ROOT / "fixtures" / "mock_rules.json"],
        sop_path=ROOT / "src" / "goaleval" / "assets" / "sop.md",
    )
    report = run_pipeline(cfg)
    print(render_report(report, "markdown"))
    print(f"artifacts in {out}/ (labels.jsonl, queue.jsonl, verdicts/, reports/)")


if __name__ == "__main__":
    main()
