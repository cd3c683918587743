"""Shared test doubles and builders."""

from __future__ import annotations

from collections import deque

import pytest

from automind.gateway import ChatRequest, ChatResponse, Usage
from automind.tree import ActionKind, MetricValue, NodeStatus, SolutionNode, SolutionTree


def text_response(text: str, input_tokens: int = 10, output_tokens: int = 5) -> ChatResponse:
    return ChatResponse(
        kind="text",
        text=text,
        usage=Usage(input_tokens=input_tokens, output_tokens=output_tokens),
    )


def tool_response(name: str, arguments: dict) -> ChatResponse:
    return ChatResponse(
        kind="tool_call",
        tool_name=name,
        tool_arguments=arguments,
        usage=Usage(input_tokens=10, output_tokens=5),
    )


def verdict_args(
    is_bug: bool = False,
    metric: float | None = 0.5,
    lower_is_better: bool = False,
    has_csv_submission: bool = True,
    is_overfitting: bool = False,
    summary: str = "ok",
) -> dict:
    return {
        "is_bug": is_bug,
        "is_overfitting": is_overfitting,
        "has_csv_submission": has_csv_submission,
        "summary": summary,
        "metric": metric,
        "lower_is_better": lower_is_better,
    }


class ScriptedBackend:
    """Serves queued responses per role, in order.

    Queue items may be ChatResponse objects, plain strings (wrapped as text
    responses), callables taking the request, or exceptions (raised).
    """

    def __init__(self) -> None:
        self.queues: dict[str, deque] = {}
        self.requests: list[ChatRequest] = []

    def push(self, role: str, *items) -> None:
        self.queues.setdefault(role, deque()).extend(items)

    def send(self, model: str, request: ChatRequest) -> ChatResponse:
        self.requests.append(request)
        queue = self.queues.get(request.role)
        if not queue:
            raise AssertionError(
                f"no scripted response for role {request.role!r} "
                f"(request #{len(self.requests)})"
            )
        item = queue.popleft()
        if isinstance(item, Exception):
            raise item
        if callable(item):
            item = item(request)
        if isinstance(item, str):
            item = text_response(item)
        return item

    def pending(self) -> int:
        return sum(len(q) for q in self.queues.values())


@pytest.fixture
def scripted_backend() -> ScriptedBackend:
    return ScriptedBackend()


def make_node(
    node_id: str,
    step_index: int,
    action: ActionKind = ActionKind.DRAFT,
    status: NodeStatus = NodeStatus.BUGGY,
    metric: float | None = None,
    lower_is_better: bool = False,
    parent_id: str | None = None,
    debug_depth: int = 0,
    plan: str = "Train a small baseline model. Then evaluate it.",
    with_tricks: bool = False,
) -> SolutionNode:
    return SolutionNode(
        id=node_id,
        parent_id=parent_id,
        action_kind=action,
        plan=plan,
        code="print('hi')",
        output="done",
        metric=None if metric is None else MetricValue(metric, lower_is_better),
        status=status,
        summary="scripted",
        debug_depth=debug_depth,
        step_index=step_index,
        with_tricks=with_tricks,
    )


def make_tree(*nodes: SolutionNode) -> SolutionTree:
    tree = SolutionTree()
    for node in nodes:
        tree.add_node(node)
    return tree
