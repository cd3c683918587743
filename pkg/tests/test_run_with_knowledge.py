"""End-to-end run with the knowledge base enabled: task labeling at start,
papers grounding drafts, tricks grounding improves."""

from __future__ import annotations

import json

from automind.config import RunConfig
from automind.knowledge import (
    HashingEmbedder,
    LabelPath,
    PaperEntry,
    PaperMeta,
    TrickEntry,
    build_index,
    save_index,
)
from automind.knowledge.entries import PaperSummary
from automind.policy import PolicyConfig
from automind.runloop import load_task, run
from automind.sandbox import ExecResult, FakeExecutor, FakeOutcome

from .conftest import ScriptedBackend, tool_response, verdict_args
from .runfixtures import write_task_dir

CV = LabelPath("Computer Vision", "Image Classification")


def build_test_index(path):
    tricks = [
        TrickEntry(
            id="other-task/fold-trick",
            source_task_id="other-task",
            title="Five-fold averaging",
            body="Average predictions over five folds.",
            labels=[CV],
        ),
        TrickEntry(
            id="demo-task/own-trick",
            source_task_id="demo-task",  # must be filtered out
            title="Own trick",
            body="From the same task.",
            labels=[CV],
        ),
    ]
    paper = PaperEntry(
        id="paper-dual-cnn",
        meta=PaperMeta(title="Dual CNN Blocks"),
        body="b",
        summary=PaperSummary(
            data_type="images", data_domain="vision", dataset_names="demo",
            ml_tasks="classification", techniques="dual cnn blocks",
            contributions="stronger encoders",
        ),
    )
    save_index(build_index([*tricks, paper], HashingEmbedder(dim=64)), path)


def test_run_grounds_prompts_in_retrieved_knowledge(tmp_path):
    index_dir = tmp_path / "index"
    build_test_index(index_dir)

    backend = ScriptedBackend()
    backend.push("analyzer", "One CSV with a target column.")
    # task labeling, one round: top categories then subcategories
    backend.push("retriever", json.dumps(["Computer Vision"]))
    backend.push(
        "retriever",
        json.dumps(
            [{"category": "Computer Vision", "subcategory": "Image Classification"}]
        ),
    )
    # action 1: draft
    backend.push("planner", "Draft plan. Use a small model.")
    backend.push("coder", "<score>2.0</score>")
    backend.push("coder", "```python\nprint('one')\n```")
    backend.push("verifier", tool_response("submission_verify", verdict_args(metric=0.6)))
    # action 2: improve with tricks
    backend.push("improver", "<think>t</think><plan>Improved plan.</plan>")
    backend.push("coder", "<score>2.0</score>")
    backend.push("coder", "```python\nprint('two')\n```")
    backend.push("verifier", tool_response("submission_verify", verdict_args(metric=0.7)))

    executor = FakeExecutor(
        {
            "print('one')": FakeOutcome(
                result=ExecResult(True, "one\n", 1.0),
                files={"submission/submission.csv": "id\n"},
            ),
            "print('two')": FakeOutcome(
                result=ExecResult(True, "two\n", 1.0),
                files={"submission/submission.csv": "id\n"},
            ),
        }
    )

    config = RunConfig(
        policy=PolicyConfig(n_init=1, h_debug=1.0, h_greedy=0.8, h_trick=1.0),
        steps=2,
        knowledge_enabled=True,
        index_dir=index_dir,
        labeling_rounds=1,
        seed=13,
    )
    task_dir = write_task_dir(tmp_path)
    run_dir = tmp_path / "run"
    task, task_data = load_task(task_dir, run_dir / "workspace")
    result = run(
        task=task,
        config=config,
        backend=backend,
        run_dir=run_dir,
        task_data=task_data,
        executor=executor,
    )
    assert result.nodes_created == 2
    assert backend.pending() == 0

    draft_prompt = next(
        r.messages[0].text for r in backend.requests if r.role == "planner"
    )
    assert "Dual CNN Blocks" in draft_prompt
    assert "techniques: dual cnn blocks" in draft_prompt

    improve_prompt = next(
        r.messages[0].text for r in backend.requests if r.role == "improver"
    )
    assert "Average predictions over five folds." in improve_prompt
    assert "From the same task." not in improve_prompt  # anti-plagiarism filter
