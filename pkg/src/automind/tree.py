"""Solution tree: node schema, tree structure, and best-node selection.

A run explores candidate solutions organized as a forest. Roots are drafted
from scratch; every other node improves a valid parent or debugs a buggy one.
The best node is the valid node with the most favorable metric under the
run's metric direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import DanglingParentError, DuplicateIdError, MixedMetricDirectionError

# Captured execution output is bounded before it is stored on a node or fed
# back into prompts: first/last segments are kept, the middle is elided.
OUTPUT_HEAD_CHARS = 4000
OUTPUT_TAIL_CHARS = 4000
ELISION_MARKER = "\n... [output truncated] ...\n"


class ActionKind(str, Enum):
    DRAFT = "Draft"
    IMPROVE = "Improve"
    DEBUG = "Debug"


class NodeStatus(str, Enum):
    VALID = "Valid"
    BUGGY = "Buggy"


def truncate_output(text: str, head: int = OUTPUT_HEAD_CHARS, tail: int = OUTPUT_TAIL_CHARS) -> str:
    """Keep at most the first *head* and last *tail* characters of *text*."""
    if len(text) <= head + tail:
        return text
    return text[:head] + ELISION_MARKER + text[len(text) - tail :]


@dataclass(frozen=True)
class MetricValue:
    """A task-specific validation score plus its direction.

    Two metric values are only comparable when they agree on direction.
    """

    value: float
    lower_is_better: bool

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError(f"metric value must be finite, got {self.value!r}")

    def better_than(self, other: MetricValue) -> bool:
        if self.lower_is_better != other.lower_is_better:
            raise MixedMetricDirectionError(
                "cannot compare metrics with opposite directions"
            )
        if self.lower_is_better:
            return self.value < other.value
        return self.value > other.value


@dataclass
class SolutionNode:
    """One candidate solution: plan, code, execution output, and verdict.

    ``debug_depth`` counts consecutive debug derivations; it is zero for any
    node that is not itself a debug attempt. ``with_tricks`` records whether
    an improve action was grounded in retrieved tricks.
    """

    id: str
    action_kind: ActionKind
    plan: str
    code: str
    output: str
    status: NodeStatus
    summary: str
    step_index: int
    parent_id: str | None = None
    metric: MetricValue | None = None
    debug_depth: int = 0
    with_tricks: bool = False

    def __post_init__(self) -> None:
        if (self.parent_id is None) != (self.action_kind is ActionKind.DRAFT):
            raise ValueError(
                f"node {self.id}: parent_id must be absent exactly for Draft nodes"
            )
        if self.status is NodeStatus.VALID and self.metric is None:
            raise ValueError(f"node {self.id}: a Valid node must carry a metric")
        if self.metric is None and self.status is not NodeStatus.BUGGY:
            raise ValueError(f"node {self.id}: a metric-less node must be Buggy")
        if self.step_index < 0:
            raise ValueError(f"node {self.id}: step_index must be nonnegative")
        if self.action_kind is not ActionKind.DEBUG and self.debug_depth != 0:
            raise ValueError(
                f"node {self.id}: debug_depth must be 0 for non-Debug nodes"
            )
        if self.debug_depth < 0:
            raise ValueError(f"node {self.id}: debug_depth must be nonnegative")


@dataclass
class SolutionTree:
    """Forest of solution nodes keyed by id, with a parent-to-children index."""

    nodes: dict[str, SolutionNode] = field(default_factory=dict)
    children: dict[str, list[str]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    def add_node(self, node: SolutionNode) -> None:
        """Insert *node*, validating linkage against the current tree.

        Raises:
            DuplicateIdError: the id is already present.
            DanglingParentError: parent_id does not refer to an existing node.
            ValueError: debug depth or step ordering invariants are violated.
        """
        if node.id in self.nodes:
            raise DuplicateIdError(f"node id {node.id!r} already in tree")
        if node.parent_id is not None and node.parent_id not in self.nodes:
            raise DanglingParentError(
                f"node {node.id!r} references missing parent {node.parent_id!r}"
            )
        if node.action_kind is ActionKind.DEBUG:
            parent = self.nodes[node.parent_id]
            expected = parent.debug_depth + 1
            if node.debug_depth != expected:
                raise ValueError(
                    f"node {node.id}: debug_depth {node.debug_depth} != "
                    f"parent depth + 1 ({expected})"
                )
        if self.nodes:
            last = next(reversed(self.nodes.values()))
            if node.step_index <= last.step_index:
                raise ValueError(
                    f"node {node.id}: step_index {node.step_index} not greater "
                    f"than previous {last.step_index}"
                )
        self.nodes[node.id] = node
        if node.parent_id is not None:
            self.children.setdefault(node.parent_id, []).append(node.id)

    def draft_count(self) -> int:
        return sum(1 for n in self.nodes.values() if n.action_kind is ActionKind.DRAFT)

    def eligible_buggy_nodes(self, max_debug_depth: int) -> set[str]:
        """Buggy nodes still worth debugging.

        A buggy node is eligible while its debug depth is strictly below the
        cap and no debug child of it has already come back valid.
        """
        if max_debug_depth < 0:
            raise ValueError("max_debug_depth must be >= 0")
        eligible: set[str] = set()
        for node in self.nodes.values():
            if node.status is not NodeStatus.BUGGY:
                continue
            if node.debug_depth >= max_debug_depth:
                continue
            if any(
                self.nodes[child].action_kind is ActionKind.DEBUG
                and self.nodes[child].status is NodeStatus.VALID
                for child in self.children.get(node.id, [])
            ):
                continue
            eligible.add(node.id)
        return eligible

    def valid_nodes(self) -> set[str]:
        return {
            n.id for n in self.nodes.values() if n.status is NodeStatus.VALID
        }

    def metric_direction(self) -> bool | None:
        """Direction established by the earliest valid node, if any."""
        for node in self.nodes.values():
            if node.status is NodeStatus.VALID:
                return node.metric.lower_is_better
        return None

    def best_node(self) -> str | None:
        """Id of the valid node with the best metric, or None.

        Ties break toward the smallest step_index. Raises
        MixedMetricDirectionError when valid nodes disagree on direction.
        """
        best: SolutionNode | None = None
        for node in self.nodes.values():
            if node.status is not NodeStatus.VALID:
                continue
            if best is None:
                best = node
            elif node.metric.better_than(best.metric):
                best = node
        return best.id if best is not None else None


def coerce_to_buggy(node: SolutionNode, note: str) -> SolutionNode:
    """Return a buggy copy of *node* with *note* appended to its summary."""
    summary = node.summary.rstrip()
    summary = f"{summary} [{note}]" if summary else f"[{note}]"
    return replace(node, status=NodeStatus.BUGGY, metric=None, summary=summary)
