"""Top-level run loop: iterate policy decisions under step and time budgets,
journal every node, retain artifacts, and report the best solution."""

from __future__ import annotations

import json
import logging
import shutil
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from .actions import ActionDeps, TaskSpec, enforce_metric_direction, run_action
from .analysis import analyze_data, refine_analysis
from .config import RunConfig
from .errors import BudgetExceeded, FatalConfigError
from .gateway import Backend, Gateway
from .journal import JournalWriter
from .knowledge import (
    KnowledgeIndex,
    KnowledgeQuery,
    label_task,
    load_index,
    load_taxonomy,
    retrieve,
    retrieve_papers,
)
from .policy import RandomSource, decision_trace
from .sandbox import (
    SUBMISSION_FILE,
    Executor,
    ShimExecutor,
    Workspace,
    prepare_workspace,
)
from .tree import MetricValue, SolutionTree

log = logging.getLogger(__name__)

SNAPSHOT_INTERVAL_SECONDS = 3600.0

# Task metadata files that must not be copied into the workspace input.
TASK_META_FILES = ("description.md", "metric.txt")


class Clock(Protocol):
    def now(self) -> float: ...


class SystemClock:
    def now(self) -> float:
        return time.monotonic()


@dataclass
class RunResult:
    best: str | None
    best_metric: MetricValue | None
    submission_path: Path | None
    nodes_created: int
    tokens: dict[str, int]
    elapsed: float

    def to_dict(self) -> dict:
        return {
            "best": self.best,
            "best_metric": None
            if self.best_metric is None
            else {
                "value": self.best_metric.value,
                "lower_is_better": self.best_metric.lower_is_better,
            },
            "submission_path": None
            if self.submission_path is None
            else str(self.submission_path),
            "nodes_created": self.nodes_created,
            "tokens": self.tokens,
            "elapsed": self.elapsed,
        }


class SnapshotWriter:
    """Appends one best-metric record per elapsed hour of run time."""

    def __init__(self, path: Path, interval: float = SNAPSHOT_INTERVAL_SECONDS) -> None:
        self.path = path
        self.interval = interval
        self.count = 0
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("", encoding="utf-8")

    def advance(self, elapsed: float, tree: SolutionTree) -> None:
        while elapsed >= (self.count + 1) * self.interval:
            self.count += 1
            best = tree.best_node()
            value = None if best is None else tree.nodes[best].metric.value
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {"elapsed_hours": self.count, "best_metric_value": value},
                        ensure_ascii=True,
                    )
                    + "\n"
                )


class IndexKnowledgeSource:
    """Retrieval adapter binding one task's labels and text to the index."""

    def __init__(self, index: KnowledgeIndex, task_id: str, task_labels, free_text: str):
        self.index = index
        self.task_id = task_id
        self.task_labels = tuple(task_labels)
        self.free_text = free_text

    def _query(self, k: int) -> KnowledgeQuery:
        return KnowledgeQuery(
            task_id=self.task_id,
            task_labels=self.task_labels,
            free_text=self.free_text,
            k=k,
        )

    def papers(self, k: int):
        return retrieve_papers(self.index, self._query(k))

    def tricks(self, k: int):
        return retrieve(self.index, self._query(k))


def _decision_record(step_index: int, decision, trace) -> dict:
    return {
        "record": "decision",
        "step_index": step_index,
        "branch": trace.branch,
        "p_debug": trace.p_debug,
        "p_greedy": trace.p_greedy,
        "p_trick": trace.p_trick,
        "buggy_candidates": trace.buggy_candidates,
        "valid_candidates": trace.valid_candidates,
        "best": trace.best,
        "parent": decision.parent,
        "action": decision.action.value,
        "with_tricks": decision.with_tricks,
    }


def _retain_artifacts(workspace: Workspace, node_dir: Path) -> None:
    if not workspace.submission_dir.is_dir():
        return
    node_dir.mkdir(parents=True, exist_ok=True)
    for path in sorted(workspace.submission_dir.iterdir()):
        if path.is_file():
            shutil.copy2(path, node_dir / path.name)


def _build_knowledge_source(task: TaskSpec, config: RunConfig, gateway: Gateway):
    if not config.knowledge_enabled or config.index_dir is None:
        return None
    index_dir = Path(config.index_dir)
    if not index_dir.is_dir():
        log.warning("knowledge index %s not found; running without it", index_dir)
        return None
    index = load_index(index_dir)
    taxonomy = load_taxonomy()
    labels = label_task(
        task.description, taxonomy, gateway, rounds=config.labeling_rounds
    )
    log.info("task labels: %s", [str(label) for label in labels])
    return IndexKnowledgeSource(
        index=index,
        task_id=task.task_id,
        task_labels=labels,
        free_text=task.description,
    )


def run(
    task: TaskSpec,
    config: RunConfig,
    backend: Backend,
    run_dir: str | Path,
    task_data: str | Path,
    executor: Executor | None = None,
    clock: Clock | None = None,
) -> RunResult:
    """Search for a solution until the step or time budget trips.

    Each iteration asks the policy for a decision, executes the action, and
    appends exactly one node to the tree and the journal. The clock is
    checked before an iteration starts; one in flight may finish past the
    limit. Per-action failures become buggy nodes and never abort the run.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    clock = clock or SystemClock()
    executor = executor or ShimExecutor(config.runner_argv())

    gateway = Gateway(config.models, backend, token_budget=config.token_budget)
    journal = JournalWriter(run_dir / "journal.jsonl")
    snapshots = SnapshotWriter(run_dir / "snapshots.jsonl")
    rng = RandomSource(config.seed)
    tree = SolutionTree()

    start = clock.now()
    workspace = prepare_workspace(task_data, task.workspace_root, exclude=TASK_META_FILES)

    analysis = analyze_data(workspace)
    if config.analyzer_refine:
        analysis = refine_analysis(analysis, task.description, gateway)

    knowledge = _build_knowledge_source(task, config, gateway)

    deps = ActionDeps(
        gateway=gateway,
        executor=executor,
        workspace=workspace,
        coder_config=config.coder,
        knowledge=knowledge,
        analysis=analysis,
        exec_timeout=config.exec_timeout,
        memory_bound=config.memory_bound,
        papers_per_draft=config.papers_per_draft,
        tricks_per_improve=config.tricks_per_improve,
        journal_sink=journal.append,
    )

    step_index = 0
    while True:
        if len(tree) >= config.steps:
            log.info("step budget reached (%d nodes)", len(tree))
            break
        if clock.now() - start >= config.time_limit:
            log.info("time budget reached")
            break
        step_index += 1
        workspace = prepare_workspace(
            task_data, task.workspace_root, exclude=TASK_META_FILES
        )
        deps.workspace = workspace
        decision, trace = decision_trace(tree, config.policy, rng)
        journal.append(_decision_record(step_index, decision, trace))
        try:
            node = run_action(tree, decision, task, deps, step_index)
        except BudgetExceeded as exc:
            log.warning("token budget exhausted, ending run: %s", exc)
            break
        node = enforce_metric_direction(tree, node)
        tree.add_node(node)
        journal.append_node(node)
        _retain_artifacts(workspace, run_dir / "nodes" / node.id)
        snapshots.advance(clock.now() - start, tree)

    elapsed = clock.now() - start
    best = tree.best_node()
    best_metric = None
    submission_path = None
    if best is not None:
        best_metric = tree.nodes[best].metric
        retained = run_dir / "nodes" / best / SUBMISSION_FILE
        if retained.is_file():
            submission_path = run_dir / SUBMISSION_FILE
            shutil.copy2(retained, submission_path)
        else:
            log.warning("best node %s has no retained submission file", best)

    result = RunResult(
        best=best,
        best_metric=best_metric,
        submission_path=submission_path,
        nodes_created=len(tree),
        tokens=gateway.ledger.snapshot(),
        elapsed=elapsed,
    )
    (run_dir / "result.json").write_text(
        json.dumps(result.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return result


def load_task(task_dir: str | Path, workspace_root: str | Path) -> tuple[TaskSpec, Path]:
    """Read a task directory into a TaskSpec plus its data directory.

    Layout: ``description.md`` (required), ``data/`` with the task files
    (falls back to the task directory itself), optional ``metric.txt``.
    """
    task_dir = Path(task_dir)
    description_file = task_dir / "description.md"
    if not description_file.is_file():
        raise FatalConfigError(f"task description not found: {description_file}")
    data_dir = task_dir / "data"
    if not data_dir.is_dir():
        data_dir = task_dir
    metric_hint = None
    metric_file = task_dir / "metric.txt"
    if metric_file.is_file():
        metric_hint = metric_file.read_text(encoding="utf-8").strip()
    workspace_root = Path(workspace_root)
    workspace_root.mkdir(parents=True, exist_ok=True)
    task = TaskSpec(
        task_id=task_dir.name,
        description=description_file.read_text(encoding="utf-8"),
        workspace_root=workspace_root,
        metric_hint=metric_hint,
    )
    return task, data_dir
