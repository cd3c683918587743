"""Action pipeline: memory digests, data analysis, prompt assembly,
verification overrides, and full run_action flows."""

from __future__ import annotations

import re

import pytest

from automind.actions import (
    ActionDeps,
    TaskSpec,
    build_memory,
    enforce_metric_direction,
    generate_plan_debug,
    generate_plan_draft,
    generate_plan_improve,
    parse_think_plan,
    run_action,
)
from automind.analysis import analyze_data, refine_analysis
from automind.coder import CoderConfig
from automind.errors import ParseFailure, WorkspaceMissingError
from automind.gateway import Gateway, RoleModelConfig
from automind.knowledge import PaperEntry, PaperMeta, TrickEntry
from automind.knowledge.entries import PaperSummary
from automind.policy import PolicyDecision
from automind.prompts import (
    EMPTY_KNOWLEDGE_MARKER,
    format_packages,
    load_template,
    render,
)
from automind.sandbox import ExecResult, FakeExecutor, FakeOutcome, prepare_workspace
from automind.tree import ActionKind, NodeStatus, SolutionTree, truncate_output
from automind.verifier import Verdict, apply_overrides, verify_output

from .conftest import make_node, make_tree, tool_response, verdict_args

MODELS = RoleModelConfig(
    retriever="m", analyzer="m", planner="m", coder="m", improver="m", verifier="m"
)


@pytest.fixture
def gateway(scripted_backend):
    return Gateway(MODELS, scripted_backend)


@pytest.fixture
def workspace(tmp_path):
    data = tmp_path / "task"
    data.mkdir()
    (data / "train.csv").write_text("id,y\n1,0\n2,1\n3,1\n", encoding="utf-8")
    return prepare_workspace(data, tmp_path / "ws")


@pytest.fixture
def task(workspace):
    return TaskSpec(
        task_id="demo-task",
        description="Predict y from id. Metric: accuracy (higher is better).",
        workspace_root=workspace.root,
    )


# ---------------------------------------------------------------------------
# Memory
# ---------------------------------------------------------------------------


def test_memory_empty_tree():
    digest = build_memory(SolutionTree(), 5)
    assert digest.entries == ()
    assert "no previous solutions" in digest.to_text()


def test_memory_keeps_most_recent_bound(tmp_path):
    nodes = [make_node(f"n{i}", i, plan=f"Plan number {i}. More detail.") for i in range(1, 11)]
    tree = make_tree(*nodes)
    digest = build_memory(tree, 5)
    assert [e.step_index for e in digest.entries] == [6, 7, 8, 9, 10]
    assert digest.entries[0].plan_digest == "Plan number 6."


def test_memory_digest_has_no_code_blocks():
    node = make_node(
        "a", 1, plan="Use a model.\n```python\nx = 1\n```\nThen stop."
    )
    digest = build_memory(make_tree(node), 5)
    assert "```" not in digest.to_text()


def test_memory_reports_status_and_metric():
    tree = make_tree(
        make_node("a", 1, status=NodeStatus.VALID, metric=0.91),
        make_node("b", 2),
    )
    text = build_memory(tree, 5).to_text()
    assert "[Valid, metric 0.91]" in text
    assert "[Buggy, metric n/a]" in text


# ---------------------------------------------------------------------------
# Data analysis
# ---------------------------------------------------------------------------


def test_analyze_data_profiles_csv(workspace):
    profile = analyze_data(workspace)
    assert "train.csv" in profile
    assert "rows: 3" in profile
    assert "header: id,y" in profile


def test_analyze_data_empty_input(tmp_path):
    data = tmp_path / "empty"
    data.mkdir()
    ws = prepare_workspace(data, tmp_path / "ws")
    assert "no files" in analyze_data(ws)


def test_analyze_data_binary_not_inlined(tmp_path):
    data = tmp_path / "task"
    data.mkdir()
    (data / "blob.bin").write_bytes(bytes(range(256)) * 10)
    ws = prepare_workspace(data, tmp_path / "ws")
    profile = analyze_data(ws)
    assert "blob.bin (2560 bytes)" in profile
    assert "\\x00" not in profile


def test_analyze_data_missing_workspace(tmp_path):
    from automind.sandbox import Workspace

    with pytest.raises(WorkspaceMissingError):
        analyze_data(Workspace(root=tmp_path / "missing"))


def test_refine_analysis_uses_analyzer_role(gateway, scripted_backend):
    scripted_backend.push("analyzer", "refined notes")
    assert refine_analysis("raw", "task", gateway) == "refined notes"
    assert scripted_backend.requests[0].role == "analyzer"


def test_refine_analysis_falls_back_on_failure(gateway, scripted_backend):
    from automind.errors import TransportFailure

    scripted_backend.push(
        "analyzer",
        TransportFailure("a"),
        TransportFailure("b"),
        TransportFailure("c"),
    )
    gateway._sleep = lambda _: None
    assert refine_analysis("raw profile", "task", gateway) == "raw profile"


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------


def test_render_leaves_literal_braces():
    template = 'Body {known} and {"json": "stays"} and {unknown}'
    out = render(template, {"known": "X"})
    assert out == 'Body X and {"json": "stays"} and {unknown}'


def test_render_rejects_unused_mapping_keys():
    with pytest.raises(KeyError):
        render("{present}", {"present": "x", "absent": "y"})


def test_draft_prompt_matches_independent_rendering(task):
    papers: list[PaperEntry] = []
    memory_text = "(no previous solutions recorded)"
    analysis = "Files in ./input (1 total):"
    template = load_template("draft")
    expected = (
        template.replace("{task_description}", task.description)
        .replace("{memory}", memory_text)
        .replace("{tricks}", EMPTY_KNOWLEDGE_MARKER)
        .replace("{data_analysis}", analysis)
        .replace("{installed_packages}", format_packages())
    )
    got = render(
        template,
        {
            "task_description": task.description,
            "memory": memory_text,
            "tricks": EMPTY_KNOWLEDGE_MARKER,
            "data_analysis": analysis,
            "installed_packages": format_packages(),
        },
    )
    assert got == expected
    assert "{task_description}" not in got


def test_all_templates_load_and_carry_expected_placeholders():
    placeholders = {
        "draft": {"task_description", "memory", "tricks", "data_analysis", "installed_packages"},
        "debug": {"task_description", "prev_plan", "prev_code", "prev_output", "data_analysis", "installed_packages"},
        "improve_with_tricks": {"task_description", "memory", "prev_plan", "prev_code", "prev_output", "tricks", "data_analysis", "installed_packages"},
        "improve_without_tricks": {"task_description", "memory", "prev_plan", "prev_code", "prev_output", "data_analysis", "installed_packages"},
        "complexity": {"task_description", "proposed_solution", "data_analysis"},
        "one_pass": {"task_description", "proposed_solution", "data_analysis", "installed_packages"},
        "decompose": {"task_description", "proposed_solution"},
        "stepwise": {"task_description", "current_step", "prev_steps", "data_analysis", "installed_packages"},
        "verify": {"task_description", "code", "execution_output"},
    }
    for name, expected in placeholders.items():
        template = load_template(name)
        found = set(re.findall(r"\{([a-z_]+)\}", template))
        assert expected <= found, f"{name}: missing {expected - found}"


def test_parse_think_plan():
    assert parse_think_plan("<think>x</think><plan>y</plan>") == ("x", "y")
    with pytest.raises(ParseFailure):
        parse_think_plan("<think>x</think> no plan tag")
    with pytest.raises(ParseFailure):
        parse_think_plan("<plan>   </plan>")


def test_generate_plan_draft_includes_paper_knowledge(task, gateway, scripted_backend):
    paper = PaperEntry(
        id="p1",
        meta=PaperMeta(title="Dual CNN Blocks"),
        body="b",
        summary=PaperSummary(
            data_type="molecules", data_domain="chemistry", dataset_names="belka",
            ml_tasks="binding prediction", techniques="dual cnn",
            contributions="stronger encoder",
        ),
    )
    scripted_backend.push("planner", "the drafted plan")
    from automind.actions import build_memory as bm

    plan = generate_plan_draft(
        task, [paper], bm(SolutionTree(), 5), "analysis text", gateway
    )
    assert plan == "the drafted plan"
    prompt = scripted_backend.requests[0].messages[0].text
    assert "Dual CNN Blocks" in prompt
    assert "techniques: dual cnn" in prompt


def test_generate_plan_draft_empty_knowledge_marker(task, gateway, scripted_backend):
    scripted_backend.push("planner", "plan")
    generate_plan_draft(task, [], build_memory(SolutionTree(), 5), "a", gateway)
    assert EMPTY_KNOWLEDGE_MARKER in scripted_backend.requests[0].messages[0].text


def test_generate_plan_improve_with_tricks(task, gateway, scripted_backend):
    parent = make_node("p", 1, status=NodeStatus.VALID, metric=0.5)
    trick = TrickEntry(
        id="t", source_task_id="other", title="Fold averaging", body="Average five folds."
    )
    scripted_backend.push("improver", "<think>r</think><plan>improved</plan>")
    think, plan = generate_plan_improve(
        task, parent, [trick], build_memory(make_tree(parent), 5), "a", gateway
    )
    assert (think, plan) == ("r", "improved")
    prompt = scripted_backend.requests[0].messages[0].text
    assert "Average five folds." in prompt
    assert "focus ONLY on integrating the provided tricks" in prompt


def test_generate_plan_improve_without_tricks_template(task, gateway, scripted_backend):
    parent = make_node("p", 1, status=NodeStatus.VALID, metric=0.5)
    scripted_backend.push("improver", "<think>r</think><plan>improved</plan>")
    generate_plan_improve(task, parent, None, build_memory(make_tree(parent), 5), "a", gateway)
    prompt = scripted_backend.requests[0].messages[0].text
    assert "one expert-level actionable improvement" in prompt
    assert "# Knowledge" not in prompt


def test_generate_plan_improve_reprompts_on_missing_tags(task, gateway, scripted_backend):
    parent = make_node("p", 1, status=NodeStatus.VALID, metric=0.5)
    scripted_backend.push("improver", "no tags", "<think>r</think><plan>ok</plan>")
    _, plan = generate_plan_improve(
        task, parent, None, build_memory(make_tree(parent), 5), "a", gateway
    )
    assert plan == "ok"
    with pytest.raises(ParseFailure):
        scripted_backend.push("improver", "no tags", "still none")
        generate_plan_improve(
            task, parent, None, build_memory(make_tree(parent), 5), "a", gateway
        )


def test_generate_plan_debug_contains_parent_context(task, gateway, scripted_backend):
    big_output = "E" * 10_000
    parent = make_node("p", 1)
    parent.output = truncate_output(big_output)
    scripted_backend.push("planner", "<think>r</think><plan>fixed</plan>")
    think, plan = generate_plan_debug(task, parent, "analysis", gateway)
    prompt = scripted_backend.requests[0].messages[0].text
    assert parent.output in prompt  # truncated form appears verbatim
    assert "# Memory" not in prompt
    assert "# Knowledge" not in prompt
    assert plan == "fixed"


# ---------------------------------------------------------------------------
# Verifier
# ---------------------------------------------------------------------------


def ok_exec(output: str = "metric printed\n") -> ExecResult:
    return ExecResult(exit_ok=True, output=output, duration=1.0)


def write_submission(workspace):
    (workspace.submission_dir / "submission.csv").write_text("id,y\n", encoding="utf-8")


def test_verify_maps_tool_call(task, gateway, scripted_backend, workspace):
    write_submission(workspace)
    scripted_backend.push(
        "verifier",
        tool_response("submission_verify", verdict_args(metric=0.87)),
    )
    verdict = verify_output(task.description, "code", ok_exec(), workspace, gateway)
    assert verdict == Verdict(
        is_bug=False,
        is_overfitting=False,
        has_csv_submission=True,
        summary="ok",
        metric=0.87,
        lower_is_better=False,
    )


def test_verify_missing_submission_forces_bug(task, gateway, scripted_backend, workspace):
    scripted_backend.push(
        "verifier", tool_response("submission_verify", verdict_args(metric=0.9))
    )
    verdict = verify_output(task.description, "code", ok_exec(), workspace, gateway)
    assert verdict.is_bug
    assert not verdict.has_csv_submission
    assert "no submission.csv" in verdict.summary


def test_verify_timeout_forces_bug(task, gateway, scripted_backend, workspace):
    write_submission(workspace)
    scripted_backend.push(
        "verifier", tool_response("submission_verify", verdict_args(metric=0.9))
    )
    timed_out = ExecResult(exit_ok=False, output="", duration=99.0, timed_out=True)
    verdict = verify_output(task.description, "code", timed_out, workspace, gateway)
    assert verdict.is_bug


def test_verify_reprompts_then_synthesizes_buggy(task, gateway, scripted_backend, workspace):
    write_submission(workspace)
    scripted_backend.push(
        "verifier",
        tool_response("submission_verify", {"is_bug": False}),  # missing fields
        "not a tool call either",
    )
    verdict = verify_output(task.description, "code", ok_exec(), workspace, gateway)
    assert verdict.is_bug
    assert "failed to produce" in verdict.summary


def test_apply_overrides_matrix(workspace):
    clean = Verdict(
        is_bug=False, is_overfitting=False, has_csv_submission=True,
        summary="fine", metric=0.5, lower_is_better=False,
    )
    cases = [
        (ok_exec(), False),  # no submission on disk
        (ExecResult(False, "err", 1.0), False),
        (ExecResult(False, "", 5.0, timed_out=True), False),
        (ok_exec(), True),
        (ExecResult(False, "err", 1.0), True),
        (ExecResult(False, "", 5.0, timed_out=True), True),
    ]
    for exec_result, with_submission in cases:
        if with_submission:
            write_submission(workspace)
        else:
            sub = workspace.submission_dir / "submission.csv"
            if sub.exists():
                sub.unlink()
        result = apply_overrides(clean, exec_result, workspace)
        clean_exec = exec_result.exit_ok and not exec_result.timed_out
        if with_submission and clean_exec:
            assert not result.is_bug
        else:
            assert result.is_bug


# ---------------------------------------------------------------------------
# run_action end to end (scripted backend + fake executor)
# ---------------------------------------------------------------------------


def draft_deps(gateway, workspace, executor=None, knowledge=None):
    return ActionDeps(
        gateway=gateway,
        executor=executor or FakeExecutor(),
        workspace=workspace,
        coder_config=CoderConfig(),
        knowledge=knowledge,
        analysis="analysis text",
    )


def script_one_pass_action(scripted_backend, executor, code, metric=0.8, output="ran\n"):
    """Queue the standard draft call sequence: plan, score, code, verdict."""
    scripted_backend.push("planner", "a fresh plan. with detail.")
    scripted_backend.push("coder", "<score>2.0</score>")
    scripted_backend.push("coder", f"```python\n{code}\n```")
    scripted_backend.push(
        "verifier",
        tool_response("submission_verify", verdict_args(metric=metric)),
    )
    executor.script(
        code,
        FakeOutcome(
            result=ExecResult(True, output, 2.0),
            files={"submission/submission.csv": "id,y\n", "submission/eval_metric.txt": "0.8"},
        ),
    )


def test_run_action_draft_valid_root(task, gateway, scripted_backend, workspace):
    executor = FakeExecutor()
    script_one_pass_action(scripted_backend, executor, "print('solve')")
    node = run_action(SolutionTree(), PolicyDecision(None, ActionKind.DRAFT), task, draft_deps(gateway, workspace, executor), 1)
    assert node.id == "n0001"
    assert node.parent_id is None
    assert node.action_kind == ActionKind.DRAFT
    assert node.status == NodeStatus.VALID
    assert node.metric.value == 0.8
    assert node.code == "print('solve')"
    assert node.output == "ran\n"
    assert node.debug_depth == 0


def test_run_action_debug_linkage(task, gateway, scripted_backend, workspace):
    tree = make_tree(make_node("n0001", 1))  # buggy draft
    executor = FakeExecutor()
    scripted_backend.push("planner", "<think>r</think><plan>fix the bug</plan>")
    scripted_backend.push("coder", "<score>2.0</score>")
    scripted_backend.push("coder", "```python\nprint('fixed')\n```")
    scripted_backend.push(
        "verifier", tool_response("submission_verify", verdict_args(metric=0.7))
    )
    executor.script(
        "print('fixed')",
        FakeOutcome(
            result=ExecResult(True, "ok\n", 1.0),
            files={"submission/submission.csv": "id,y\n"},
        ),
    )
    decision = PolicyDecision("n0001", ActionKind.DEBUG)
    node = run_action(tree, decision, task, draft_deps(gateway, workspace, executor), 2)
    assert node.parent_id == "n0001"
    assert node.debug_depth == 1
    assert node.status == NodeStatus.VALID


def test_run_action_abandonment_becomes_buggy(task, gateway, scripted_backend, workspace):
    executor = FakeExecutor()
    scripted_backend.push("planner", "complex plan")
    scripted_backend.push("coder", "<score>4.0</score>")  # stepwise route
    steps = '```json\n{"decomposed steps": [{"step": "S1", "details": "d"}]}\n```'
    scripted_backend.push("coder", steps)
    scripted_backend.push(
        "coder",
        "<think>t</think>```python\nbad(\n```",
        "<think>t</think>```python\nbad(\n```",
        "<think>t</think>```python\nbad(\n```",
    )
    decision = PolicyDecision(None, ActionKind.DRAFT)
    node = run_action(SolutionTree(), decision, task, draft_deps(gateway, workspace, executor), 1)
    assert node.status == NodeStatus.BUGGY
    assert node.metric is None
    assert "plan abandoned at substep 1" in node.summary


def test_run_action_plan_parse_failure_becomes_buggy(task, gateway, scripted_backend, workspace):
    tree = make_tree(make_node("n0001", 1, status=NodeStatus.VALID, metric=0.5))
    scripted_backend.push("improver", "no tags", "still no tags")
    decision = PolicyDecision("n0001", ActionKind.IMPROVE)
    node = run_action(tree, decision, task, draft_deps(gateway, FakeExecutor(), None), 2)
    assert node.status == NodeStatus.BUGGY
    assert "plan generation failed" in node.summary


def test_run_action_improve_uses_retrieved_tricks(task, gateway, scripted_backend, workspace):
    tree = make_tree(make_node("n0001", 1, status=NodeStatus.VALID, metric=0.5))

    class StubKnowledge:
        def papers(self, k):
            return []

        def tricks(self, k):
            return [
                TrickEntry(
                    id="t", source_task_id="other", title="Mixup", body="Blend inputs."
                )
            ]

    executor = FakeExecutor()
    scripted_backend.push("improver", "<think>r</think><plan>better plan</plan>")
    scripted_backend.push("coder", "<score>1.5</score>")
    scripted_backend.push("coder", "```python\nprint('improved')\n```")
    scripted_backend.push(
        "verifier", tool_response("submission_verify", verdict_args(metric=0.9))
    )
    executor.script(
        "print('improved')",
        FakeOutcome(
            result=ExecResult(True, "better\n", 1.0),
            files={"submission/submission.csv": "id,y\n"},
        ),
    )
    deps = ActionDeps(
        gateway=gateway,
        executor=executor,
        workspace=workspace,
        knowledge=StubKnowledge(),
        analysis="a",
    )
    decision = PolicyDecision("n0001", ActionKind.IMPROVE, with_tricks=True)
    node = run_action(tree, decision, task, deps, 2)
    assert node.with_tricks
    improve_prompt = scripted_backend.requests[0].messages[0].text
    assert "Blend inputs." in improve_prompt


def test_run_action_infrastructure_failure_degrades_to_buggy(
    task, gateway, scripted_backend, workspace
):
    # an unscripted executor raises ExecutorUnavailable; the action must
    # still produce a node instead of aborting the run
    scripted_backend.push("planner", "a plan. detail.")
    scripted_backend.push("coder", "<score>2.0</score>")
    scripted_backend.push("coder", "```python\nnot_scripted()\n```")
    node = run_action(
        SolutionTree(), PolicyDecision(None, ActionKind.DRAFT), task,
        draft_deps(gateway, workspace, FakeExecutor()), 1,
    )
    assert node.status == NodeStatus.BUGGY
    assert "action failed" in node.summary


def test_enforce_metric_direction_coerces_disagreement():
    tree = make_tree(make_node("a", 1, status=NodeStatus.VALID, metric=0.5))
    disagreeing = make_node(
        "b", 2, status=NodeStatus.VALID, metric=0.2, lower_is_better=True
    )
    coerced = enforce_metric_direction(tree, disagreeing)
    assert coerced.status == NodeStatus.BUGGY
    assert coerced.metric is None
    agreeing = make_node("c", 3, status=NodeStatus.VALID, metric=0.7)
    assert enforce_metric_direction(tree, agreeing) is agreeing


def test_run_action_deps_workspace_must_match(task, gateway, scripted_backend, workspace):
    # the node's output is the truncated execution output
    executor = FakeExecutor()
    long_output = "x" * 10_000
    script_one_pass_action(scripted_backend, executor, "print('big')", output=long_output)
    node = run_action(
        SolutionTree(), PolicyDecision(None, ActionKind.DRAFT), task,
        draft_deps(gateway, workspace, executor), 1,
    )
    assert len(node.output) < 10_000
    assert "[output truncated]" in node.output
