#!/usr/bin/env python3
"""Re-run the mock pipeline on the bundled corpus and freeze the golden
artifacts (fixtures/golden/report.json, labels.jsonl, run_manifest.json).

Run this only when an intentional behavior change invalidates the golden
files; the acceptance suite compares against them byte-for-byte.
"""

from __future__ import annotations

import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from goaleval.pipeline import PipelineConfig, run_pipeline

FIXTURES = ROOT / "fixtures"
GOLDEN = FIXTURES / "golden"


def main() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as workdir:
        cfg = PipelineConfig(
            mode="mock",
            workdir=Path(workdir),
            dialogs_path=FIXTURES / "corpus_50.jsonl",
            mock_rulesets=[FIXTURES / "mock_rules.json"],
        )
        run_pipeline(cfg)
        work = Path(workdir)
        shutil.copy(work / "reports" / "report.json", GOLDEN / "report.json")
        shutil.copy(work / "reports" / "run_manifest.json", GOLDEN / "run_manifest.json")
        shutil.copy(work / "labels.jsonl", GOLDEN / "labels.jsonl")
    print(f"refreshed golden artifacts in {GOLDEN}")


if __name__ == "__main__":
    main()
