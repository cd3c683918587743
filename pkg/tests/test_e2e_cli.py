"""Outside-in smoke: the installed console script, a replay transcript, and
the live runner executing real generated code.

Records a one-action run against the live runner first, then replays it
through ``automind run`` in a subprocess and checks the artifacts. Skipped
when the runner package is not importable.
"""

from __future__ import annotations

import importlib.util
import json
import subprocess
import sys
from pathlib import Path

import pytest

from automind.config import load_config
from automind.gateway import RecordingBackend
from automind.runloop import load_task, run
from automind.sandbox import ShimExecutor

from .conftest import ScriptedBackend, tool_response, verdict_args
from .runfixtures import write_task_dir

pytestmark = pytest.mark.skipif(
    importlib.util.find_spec("automind_runner") is None,
    reason="runner package not installed",
)

SOLUTION_CODE = """\
import os
import pathlib

if __name__ == "__main__":
    rows = []
    for root, _, files in os.walk("./input"):
        for name in sorted(files):
            rows.append(name)
    pathlib.Path("./submission").mkdir(exist_ok=True)
    with open("./submission/submission.csv", "w") as fh:
        fh.write("id,target\\n1,0\\n2,1\\n3,0\\n")
    with open("./submission/eval_metric.txt", "w") as fh:
        fh.write("0.5\\n")
    print("files:", ",".join(rows))
    print("Validation metric: 0.5")\
"""

CONFIG_TEXT = (
    "agent.steps = 1\n"
    "agent.search.num_drafts = 1\n"
    "agent.seed = 1\n"
    "knowledge.enabled = false\n"
    f"sandbox.runner_cmd = {sys.executable} -m automind_runner\n"
)


def scripted_backend() -> ScriptedBackend:
    backend = ScriptedBackend()
    backend.push("analyzer", "One CSV with id and target columns.")
    backend.push("planner", "Write the sample predictions. Keep it simple.")
    backend.push("coder", "<score>1.5</score>")
    backend.push("coder", f"```python\n{SOLUTION_CODE}\n```")
    backend.push(
        "verifier",
        tool_response(
            "submission_verify",
            verdict_args(metric=0.5, summary="wrote the sample predictions"),
        ),
    )
    return backend


def test_cli_replay_run_with_live_runner(tmp_path):
    task_dir = write_task_dir(tmp_path)
    config_file = tmp_path / "run.cfg"
    config_file.write_text(CONFIG_TEXT, encoding="utf-8")
    transcript = tmp_path / "transcript.jsonl"

    # record once against the live runner
    config = load_config(config_file, {})
    task, task_data = load_task(task_dir, tmp_path / "rec" / "workspace")
    recorded = run(
        task=task,
        config=config,
        backend=RecordingBackend(scripted_backend(), transcript),
        run_dir=tmp_path / "rec",
        task_data=task_data,
        executor=ShimExecutor(config.runner_argv()),
    )
    assert recorded.best == "n0001"

    # replay through the console script with the real runner
    completed = subprocess.run(
        [
            sys.executable, "-m", "automind.cli",
            "run",
            "--task", str(task_dir),
            "--config", str(config_file),
            "--transcript", str(transcript),
            "--out", str(tmp_path / "runs"),
            "--run-id", "e2e",
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
        timeout=120,
    )
    assert completed.returncode == 0, completed.stdout
    assert "best node: n0001" in completed.stdout

    run_dir = tmp_path / "runs" / "e2e"
    submission = run_dir / "submission.csv"
    assert submission.read_text() == "id,target\n1,0\n2,1\n3,0\n"
    result = json.loads((run_dir / "result.json").read_text())
    assert result["best_metric"] == {"value": 0.5, "lower_is_better": False}

    # the journal matches the recorded run byte for byte
    assert (run_dir / "journal.jsonl").read_bytes() == (
        tmp_path / "rec" / "journal.jsonl"
    ).read_bytes()
