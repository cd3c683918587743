#!/usr/bin/env python3
"""Regenerate the committed golden run fixture.

Runs the scripted seven-action scenario once against the scripted backend,
recording the transcript, and freezes transcript + journal + expected
artifacts under tests/data/golden/. Rerun only when the scenario, the
prompts, or the journal format intentionally change.
"""

from __future__ import annotations

import json
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from automind.config import load_config  # noqa: E402
from automind.gateway import RecordingBackend  # noqa: E402
from automind.runloop import load_task, run  # noqa: E402
from tests.runfixtures import (  # noqa: E402
    GOLDEN_CONFIG_TEXT,
    build_golden_backend,
    write_task_dir,
)

GOLDEN_DIR = ROOT / "tests" / "data" / "golden"


def main() -> int:
    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    (GOLDEN_DIR / "config.cfg").write_text(GOLDEN_CONFIG_TEXT, encoding="utf-8")

    with tempfile.TemporaryDirectory() as tmp:
        tmp_path = Path(tmp)
        task_dir = write_task_dir(tmp_path)
        run_dir = tmp_path / "run"
        backend, executor = build_golden_backend()
        recording = RecordingBackend(backend, GOLDEN_DIR / "transcript.jsonl")
        (GOLDEN_DIR / "transcript.jsonl").write_text("", encoding="utf-8")

        config = load_config(GOLDEN_DIR / "config.cfg", {})
        task, task_data = load_task(task_dir, run_dir / "workspace")
        result = run(
            task=task,
            config=config,
            backend=recording,
            run_dir=run_dir,
            task_data=task_data,
            executor=executor,
        )
        assert backend.pending() == 0, "golden scenario left unused responses"
        assert result.best == "n0006", f"unexpected best node {result.best}"

        shutil.copy2(run_dir / "journal.jsonl", GOLDEN_DIR / "journal.jsonl")
        shutil.copy2(run_dir / "submission.csv", GOLDEN_DIR / "submission.csv")

        # freeze the first draft prompt for the byte-stability check
        with (GOLDEN_DIR / "transcript.jsonl").open(encoding="utf-8") as fh:
            for line in fh:
                record = json.loads(line)
                if record["role"] == "planner":
                    prompt = record["request"]["messages"][0][1]
                    (GOLDEN_DIR / "draft_prompt.txt").write_text(
                        prompt, encoding="utf-8"
                    )
                    break

    journal_lines = (GOLDEN_DIR / "journal.jsonl").read_text().splitlines()
    node_lines = [line for line in journal_lines if '"record"' not in line]
    print(f"golden fixture written: {len(node_lines)} nodes, best={result.best}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
