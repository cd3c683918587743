"""One search action end to end: assemble the prompt, generate a plan,
delegate coding, execute, verify, and produce the new solution node.

Draft actions ground the plan in retrieved papers, improve actions in
retrieved tricks (when the policy asked for them), debug actions see only
the buggy parent. Any failure along the way degrades to a buggy node; an
action never aborts the run.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

from . import coder as coding
from .coder import Abandoned, CoderConfig, StepwiseSuccess
from .errors import AutomindError, BudgetExceeded, LlmFailure, ParseFailure
from .gateway import ChatRequest, Gateway, Message, Sampling
from .knowledge.entries import PaperEntry, TrickEntry
from .policy import PolicyDecision
from .prompts import (
    EMPTY_MEMORY_MARKER,
    format_packages,
    format_papers,
    format_tricks,
    load_template,
    render,
)
from .sandbox import ExecResult, Executor, Workspace, truncate_output
from .tree import ActionKind, MetricValue, NodeStatus, SolutionNode, SolutionTree
from .verifier import verify_output

log = logging.getLogger(__name__)

PLANNER_SAMPLING = Sampling(temperature=0.5, max_output_tokens=8192)

DEFAULT_MEMORY_BOUND = 10
DEFAULT_PAPERS_PER_DRAFT = 3
DEFAULT_TRICKS_PER_IMPROVE = 3

_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)
_PLAN_RE = re.compile(r"<plan>(.*?)</plan>", re.DOTALL)
_FENCE_RE = re.compile(r"```.*?```", re.DOTALL)
_SENTENCE_END_RE = re.compile(r"\.(?:\s|$)")


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    description: str
    workspace_root: Path
    metric_hint: str | None = None

    def __post_init__(self) -> None:
        if not self.description:
            raise ValueError("task description must be non-empty")
        if not Path(self.workspace_root).is_dir():
            raise ValueError(f"workspace root does not exist: {self.workspace_root}")


@dataclass(frozen=True)
class MemoryEntry:
    step_index: int
    plan_digest: str
    status: str
    metric: float | None


@dataclass(frozen=True)
class MemoryDigest:
    entries: tuple[MemoryEntry, ...]

    def to_text(self) -> str:
        if not self.entries:
            return EMPTY_MEMORY_MARKER
        lines = []
        for entry in self.entries:
            metric = "n/a" if entry.metric is None else f"{entry.metric:g}"
            lines.append(
                f"- step {entry.step_index} [{entry.status}, metric {metric}]: "
                f"{entry.plan_digest}"
            )
        return "\n".join(lines)


def _first_sentence(plan: str) -> str:
    text = _FENCE_RE.sub(" ", plan)
    text = " ".join(text.split())
    match = _SENTENCE_END_RE.search(text)
    if match:
        return text[: match.start() + 1]
    return text[:200]


def build_memory(tree: SolutionTree, bound: int = DEFAULT_MEMORY_BOUND) -> MemoryDigest:
    """Digest of the most recent *bound* nodes, oldest first."""
    if bound < 0:
        raise ValueError("bound must be >= 0")
    recent = sorted(tree.nodes.values(), key=lambda n: n.step_index)[-bound:] if bound else []
    return MemoryDigest(
        entries=tuple(
            MemoryEntry(
                step_index=node.step_index,
                plan_digest=_first_sentence(node.plan),
                status=node.status.value,
                metric=None if node.metric is None else node.metric.value,
            )
            for node in recent
        )
    )


def parse_think_plan(text: str) -> tuple[str, str]:
    """Extract the <think> and <plan> sections of a response."""
    think = _THINK_RE.search(text)
    plan = _PLAN_RE.search(text)
    if plan is None or not plan.group(1).strip():
        raise ParseFailure("response has no non-empty <plan></plan> section")
    return (think.group(1).strip() if think else "", plan.group(1).strip())


def _planner_text(gateway: Gateway, role: str, prompt: str) -> str:
    response = gateway.complete(
        ChatRequest(
            role=role, messages=(Message("user", prompt),), sampling=PLANNER_SAMPLING
        )
    )
    return response.text or ""


def _tagged_plan(gateway: Gateway, role: str, prompt: str) -> tuple[str, str]:
    """Think/plan completion with one corrective reprompt on a parse miss."""
    try:
        return parse_think_plan(_planner_text(gateway, role, prompt))
    except ParseFailure as exc:
        log.warning("plan response rejected, reprompting once: %s", exc)
    retry_prompt = prompt + (
        "\n\nYour previous response was not parseable. Wrap your reasoning in "
        "<think></think> and the full improved plan in <plan></plan>."
    )
    return parse_think_plan(_planner_text(gateway, role, retry_prompt))


def generate_plan_draft(
    task: TaskSpec,
    papers: list[PaperEntry],
    memory: MemoryDigest,
    analysis: str,
    gateway: Gateway,
) -> str:
    """Plan a fresh solution, grounded in retrieved papers when available."""
    prompt = render(
        load_template("draft"),
        {
            "task_description": task.description,
            "memory": memory.to_text(),
            "tricks": format_papers(papers),
            "data_analysis": analysis,
            "installed_packages": format_packages(),
        },
    )
    return _planner_text(gateway, "planner", prompt).strip()


def generate_plan_improve(
    task: TaskSpec,
    parent: SolutionNode,
    tricks: list[TrickEntry] | None,
    memory: MemoryDigest,
    analysis: str,
    gateway: Gateway,
) -> tuple[str, str]:
    """Improve a valid parent; *tricks* selects the grounded prompt variant."""
    if parent.status is not NodeStatus.VALID:
        raise ValueError("improve requires a valid parent node")
    mapping = {
        "task_description": task.description,
        "memory": memory.to_text(),
        "prev_plan": parent.plan,
        "prev_code": parent.code,
        "prev_output": parent.output,
        "data_analysis": analysis,
        "installed_packages": format_packages(),
    }
    if tricks is not None:
        template = load_template("improve_with_tricks")
        mapping["tricks"] = format_tricks(tricks)
    else:
        template = load_template("improve_without_tricks")
    return _tagged_plan(gateway, "improver", render(template, mapping))


def generate_plan_debug(
    task: TaskSpec, parent: SolutionNode, analysis: str, gateway: Gateway
) -> tuple[str, str]:
    """Repair a buggy parent from its plan, code, and execution output."""
    if parent.status is not NodeStatus.BUGGY:
        raise ValueError("debug requires a buggy parent node")
    prompt = render(
        load_template("debug"),
        {
            "task_description": task.description,
            "prev_plan": parent.plan,
            "prev_code": parent.code,
            "prev_output": parent.output,
            "data_analysis": analysis,
            "installed_packages": format_packages(),
        },
    )
    return _tagged_plan(gateway, "planner", prompt)


class KnowledgeSource(Protocol):
    """Retrieval interface the run loop provides when knowledge is enabled."""

    def papers(self, k: int) -> list[PaperEntry]: ...

    def tricks(self, k: int) -> list[TrickEntry]: ...


@dataclass
class ActionDeps:
    """Everything one action needs besides the tree and the decision."""

    gateway: Gateway
    executor: Executor
    workspace: Workspace
    coder_config: CoderConfig = CoderConfig()
    knowledge: KnowledgeSource | None = None
    analysis: str = ""
    exec_timeout: float = 32400.0
    memory_bound: int = DEFAULT_MEMORY_BOUND
    papers_per_draft: int = DEFAULT_PAPERS_PER_DRAFT
    tricks_per_improve: int = DEFAULT_TRICKS_PER_IMPROVE
    journal_sink: Callable[[dict], None] | None = None


@dataclass
class _CodingOutcome:
    code: str
    exec_result: ExecResult
    failure: str | None = None


def _emit_substep_logs(deps: ActionDeps, node_id: str, logs) -> None:
    if deps.journal_sink is None:
        return
    for entry in logs:
        deps.journal_sink(
            {
                "record": "substep",
                "node_id": node_id,
                "step_index": entry.step_index,
                "attempts": entry.attempts,
                "outcome": entry.outcome,
                "duration": entry.duration,
            }
        )


def _implement_and_execute(
    task: TaskSpec, plan: str, deps: ActionDeps, node_id: str
) -> _CodingOutcome:
    """Score, route, generate, and run the code for *plan*."""
    score = coding.score_complexity(
        task.description, plan, deps.analysis, deps.gateway
    )
    strategy = coding.route(score, deps.coder_config)
    step_plan = None
    if strategy == coding.STEPWISE:
        try:
            step_plan = coding.decompose(
                task.description, plan, deps.gateway, deps.coder_config
            )
        except ParseFailure as exc:
            log.warning("decomposition failed, falling back to one-pass: %s", exc)
            strategy = coding.ONE_PASS

    if strategy == coding.ONE_PASS:
        try:
            code = coding.code_one_pass(
                task.description, plan, deps.analysis, deps.gateway
            )
        except ParseFailure as exc:
            return _CodingOutcome(
                code="",
                exec_result=ExecResult(exit_ok=False, output="", duration=0.0),
                failure=f"code generation failed: {exc}",
            )
        exec_result = deps.executor.run_script(
            deps.workspace, code, deps.exec_timeout
        )
        return _CodingOutcome(code=code, exec_result=exec_result)

    outcome = coding.code_stepwise(
        task.description,
        step_plan,
        deps.analysis,
        deps.workspace,
        deps.executor,
        deps.gateway,
        deps.coder_config,
        deps.exec_timeout,
    )
    _emit_substep_logs(deps, node_id, outcome.logs)
    if isinstance(outcome, Abandoned):
        return _CodingOutcome(
            code="",
            exec_result=ExecResult(
                exit_ok=False, output=outcome.last_error, duration=0.0
            ),
            failure=(
                f"plan abandoned at substep {outcome.substep_index}: "
                f"{outcome.last_error}"
            ),
        )
    assert isinstance(outcome, StepwiseSuccess)
    return _CodingOutcome(
        code=outcome.code,
        exec_result=ExecResult(
            exit_ok=True, output=outcome.output, duration=outcome.duration
        ),
    )


def _buggy_node(
    node_id: str,
    decision: PolicyDecision,
    parent: SolutionNode | None,
    step_index: int,
    plan: str,
    code: str,
    output: str,
    summary: str,
) -> SolutionNode:
    debug_depth = 0
    if decision.action is ActionKind.DEBUG:
        debug_depth = parent.debug_depth + 1
    return SolutionNode(
        id=node_id,
        parent_id=decision.parent,
        action_kind=decision.action,
        plan=plan,
        code=code,
        output=truncate_output(output),
        metric=None,
        status=NodeStatus.BUGGY,
        summary=summary,
        debug_depth=debug_depth,
        step_index=step_index,
        with_tricks=decision.with_tricks,
    )


def run_action(
    tree: SolutionTree,
    decision: PolicyDecision,
    task: TaskSpec,
    deps: ActionDeps,
    step_index: int,
) -> SolutionNode:
    """Execute one policy decision and return the resulting node.

    Exactly one node comes back per call; model failures, parse failures,
    abandoned plans, and infrastructure errors all map to buggy nodes
    carrying a failure summary. Only a tripped token budget propagates,
    since it ends the whole run.
    """
    try:
        return _run_action(tree, decision, task, deps, step_index)
    except BudgetExceeded:
        raise
    except AutomindError as exc:
        parent = tree.nodes[decision.parent] if decision.parent is not None else None
        return _buggy_node(
            f"n{step_index:04d}", decision, parent, step_index,
            plan="", code="", output="",
            summary=f"action failed: {exc}",
        )


def _run_action(
    tree: SolutionTree,
    decision: PolicyDecision,
    task: TaskSpec,
    deps: ActionDeps,
    step_index: int,
) -> SolutionNode:
    node_id = f"n{step_index:04d}"
    parent = tree.nodes[decision.parent] if decision.parent is not None else None
    memory = build_memory(tree, deps.memory_bound)

    plan = ""
    try:
        if decision.action is ActionKind.DRAFT:
            papers: list[PaperEntry] = []
            if deps.knowledge is not None:
                papers = deps.knowledge.papers(deps.papers_per_draft)
            plan = generate_plan_draft(task, papers, memory, deps.analysis, deps.gateway)
        elif decision.action is ActionKind.IMPROVE:
            # Without a knowledge base there is nothing to integrate, so the
            # plain improve prompt is used even when the policy drew tricks.
            tricks: list[TrickEntry] | None = None
            if decision.with_tricks and deps.knowledge is not None:
                tricks = deps.knowledge.tricks(deps.tricks_per_improve)
            _, plan = generate_plan_improve(
                task, parent, tricks, memory, deps.analysis, deps.gateway
            )
        else:
            _, plan = generate_plan_debug(task, parent, deps.analysis, deps.gateway)
        if not plan:
            raise ParseFailure("empty plan")
    except (ParseFailure, LlmFailure) as exc:
        return _buggy_node(
            node_id, decision, parent, step_index,
            plan="", code="", output="",
            summary=f"plan generation failed: {exc}",
        )

    try:
        outcome = _implement_and_execute(task, plan, deps, node_id)
    except LlmFailure as exc:
        return _buggy_node(
            node_id, decision, parent, step_index,
            plan=plan, code="", output="",
            summary=f"code generation failed: {exc}",
        )
    if outcome.failure is not None:
        return _buggy_node(
            node_id, decision, parent, step_index,
            plan=plan, code=outcome.code, output=outcome.exec_result.output,
            summary=outcome.failure,
        )

    try:
        verdict = verify_output(
            task.description,
            outcome.code,
            outcome.exec_result,
            deps.workspace,
            deps.gateway,
        )
    except LlmFailure as exc:
        return _buggy_node(
            node_id, decision, parent, step_index,
            plan=plan, code=outcome.code, output=outcome.exec_result.output,
            summary=f"verification failed: {exc}",
        )

    status = NodeStatus.BUGGY if verdict.is_bug else NodeStatus.VALID
    metric = None
    if status is NodeStatus.VALID:
        metric = MetricValue(verdict.metric, verdict.lower_is_better)
    debug_depth = 0
    if decision.action is ActionKind.DEBUG:
        debug_depth = parent.debug_depth + 1
    return SolutionNode(
        id=node_id,
        parent_id=decision.parent,
        action_kind=decision.action,
        plan=plan,
        code=outcome.code,
        output=truncate_output(outcome.exec_result.output),
        metric=metric,
        status=status,
        summary=verdict.summary,
        debug_depth=debug_depth,
        step_index=step_index,
        with_tricks=decision.with_tricks,
    )


def enforce_metric_direction(tree: SolutionTree, node: SolutionNode) -> SolutionNode:
    """Coerce a valid node to buggy when its metric direction disagrees with
    the run's canonical direction (set by the first valid node)."""
    if node.status is not NodeStatus.VALID:
        return node
    canonical = tree.metric_direction()
    if canonical is None or node.metric.lower_is_better == canonical:
        return node
    from .tree import coerce_to_buggy

    log.warning(
        "node %s reports metric direction lower_is_better=%s, run uses %s; "
        "coercing to buggy",
        node.id,
        node.metric.lower_is_better,
        canonical,
    )
    return coerce_to_buggy(
        node, "metric direction disagrees with the run's canonical direction"
    )
