"""Append-only run journal and text renderings of the solution tree.

Node records carry a fixed key order so a journal written from a
deterministic run is byte-stable. Auxiliary records (policy decisions,
stepwise substep logs) share the file but carry a ``record`` discriminator
and are skipped when the journal is replayed into a tree.
"""

from __future__ import annotations

import json
from pathlib import Path

from .tree import ActionKind, MetricValue, NodeStatus, SolutionNode, SolutionTree


def node_to_record(node: SolutionNode) -> dict:
    return {
        "id": node.id,
        "parent_id": node.parent_id,
        "action_kind": node.action_kind.value,
        "status": node.status.value,
        "metric_value": None if node.metric is None else node.metric.value,
        "lower_is_better": None if node.metric is None else node.metric.lower_is_better,
        "debug_depth": node.debug_depth,
        "step_index": node.step_index,
        "plan": node.plan,
        "code": node.code,
        "output": node.output,
        "summary": node.summary,
        "with_tricks": node.with_tricks,
    }


def node_from_record(record: dict) -> SolutionNode:
    metric = None
    if record.get("metric_value") is not None:
        metric = MetricValue(
            value=float(record["metric_value"]),
            lower_is_better=bool(record["lower_is_better"]),
        )
    return SolutionNode(
        id=record["id"],
        parent_id=record.get("parent_id"),
        action_kind=ActionKind(record["action_kind"]),
        status=NodeStatus(record["status"]),
        metric=metric,
        debug_depth=int(record["debug_depth"]),
        step_index=int(record["step_index"]),
        plan=record.get("plan", ""),
        code=record.get("code", ""),
        output=record.get("output", ""),
        summary=record.get("summary", ""),
        with_tricks=bool(record.get("with_tricks", False)),
    )


class JournalWriter:
    """Appends one JSON object per line; flushes on every write."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("", encoding="utf-8")

    def append(self, record: dict) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=True) + "\n")

    def append_node(self, node: SolutionNode) -> None:
        self.append(node_to_record(node))


def load_journal_tree(path: str | Path) -> SolutionTree:
    """Rebuild the solution tree from a journal file."""
    tree = SolutionTree()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        record = json.loads(line)
        if "record" in record:
            continue  # decision / substep records
        tree.add_node(node_from_record(record))
    return tree


def _node_line(tree: SolutionTree, node: SolutionNode, best: str | None) -> str:
    metric = ""
    if node.metric is not None:
        direction = "min" if node.metric.lower_is_better else "max"
        metric = f"  metric={node.metric.value:g} ({direction})"
    marker = "  *best*" if node.id == best else ""
    return f"{node.id}  {node.action_kind.value}  [{node.status.value}]{metric}{marker}"


def render_tree_text(tree: SolutionTree) -> str:
    """Deterministic indented text rendering with statuses and metrics."""
    if not tree.nodes:
        return "(empty tree)"
    best = tree.best_node()
    lines: list[str] = []

    def walk(node_id: str, depth: int) -> None:
        node = tree.nodes[node_id]
        indent = "    " * depth
        lines.append(f"{indent}{_node_line(tree, node, best)}")
        for child_id in tree.children.get(node_id, []):
            walk(child_id, depth + 1)

    roots = [n.id for n in tree.nodes.values() if n.parent_id is None]
    for root in roots:
        walk(root, 0)
    return "\n".join(lines)


def export_dot(tree: SolutionTree) -> str:
    """Graph description (DOT) of the tree for visualization."""
    best = tree.best_node()
    lines = ["digraph solution_tree {", "  rankdir=TB;", "  node [shape=box];"]
    for node in tree.nodes.values():
        label_parts = [node.id, f"{node.action_kind.value} {node.status.value}"]
        if node.metric is not None:
            label_parts.append(f"metric={node.metric.value:g}")
        color = "palegreen" if node.status is NodeStatus.VALID else "lightcoral"
        if node.id == best:
            color = "gold"
        label = "\\n".join(label_parts)
        lines.append(
            f'  "{node.id}" [label="{label}", style=filled, fillcolor={color}];'
        )
    for node in tree.nodes.values():
        if node.parent_id is not None:
            lines.append(f'  "{node.parent_id}" -> "{node.id}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
