"""Search policy: pick a parent node and the next action for one iteration.

Rule-plus-coin-flip policy. Draft until the initial quota is filled; then
with probability h_debug repair a random eligible buggy node; otherwise
improve, greedily targeting the best node with probability h_greedy and a
uniformly random valid node the rest of the time. When nothing can be
debugged or improved, fall back to drafting.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .tree import ActionKind, SolutionTree


@dataclass(frozen=True)
class PolicyConfig:
    n_init: int = 5
    h_debug: float = 1.0
    h_greedy: float = 0.8
    h_trick: float = 0.8
    max_debug_depth: int = 20

    def __post_init__(self) -> None:
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.max_debug_depth < 1:
            raise ValueError("max_debug_depth must be >= 1")
        for name in ("h_debug", "h_greedy", "h_trick"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")


@dataclass(frozen=True)
class PolicyDecision:
    """Parent node (None means drafting from scratch) and the chosen action."""

    parent: str | None
    action: ActionKind
    with_tricks: bool = False

    def __post_init__(self) -> None:
        if (self.parent is None) != (self.action is ActionKind.DRAFT):
            raise ValueError("parent must be absent exactly for Draft decisions")


class RandomSource:
    """Seeded pseudo-random stream; identical seed and call sequence replay
    identical outputs."""

    def __init__(self, seed: int) -> None:
        self.seed = seed
        self._rng = random.Random(seed)

    def uniform(self) -> float:
        """Uniform real in [0, 1)."""
        return self._rng.random()

    def choice(self, items: list):
        """Uniform choice from a non-empty finite sequence."""
        if not items:
            raise ValueError("cannot choose from an empty sequence")
        return items[self._rng.randrange(len(items))]


@dataclass
class PolicyTrace:
    """Audit record of one policy decision: draws taken and candidates seen."""

    branch: str
    p_debug: float | None = None
    p_greedy: float | None = None
    p_trick: float | None = None
    buggy_candidates: list[str] = field(default_factory=list)
    valid_candidates: list[str] = field(default_factory=list)
    best: str | None = None


def decision_trace(
    tree: SolutionTree, config: PolicyConfig, rng: RandomSource
) -> tuple[PolicyDecision, PolicyTrace]:
    """Run the policy and return the decision plus its audit trace.

    Candidate sets are ordered by creation (step_index) before sampling so
    that a fixed seed fixes the decision.
    """
    if tree.draft_count() < config.n_init:
        return PolicyDecision(None, ActionKind.DRAFT), PolicyTrace(branch="draft_quota")

    by_step = lambda node_id: tree.nodes[node_id].step_index  # noqa: E731
    buggy = sorted(tree.eligible_buggy_nodes(config.max_debug_depth), key=by_step)
    valid = sorted(tree.valid_nodes(), key=by_step)

    p_debug = rng.uniform()
    buggy_pick = rng.choice(buggy) if buggy else None
    if p_debug < config.h_debug and buggy_pick is not None:
        trace = PolicyTrace(
            branch="debug",
            p_debug=p_debug,
            buggy_candidates=buggy,
            valid_candidates=valid,
        )
        return PolicyDecision(buggy_pick, ActionKind.DEBUG), trace

    p_greedy = rng.uniform()
    best = tree.best_node()
    trace = PolicyTrace(
        branch="",
        p_debug=p_debug,
        p_greedy=p_greedy,
        buggy_candidates=buggy,
        valid_candidates=valid,
        best=best,
    )
    if p_greedy < config.h_greedy and best is not None:
        trace.branch = "improve_greedy"
        parent = best
    elif valid:
        trace.branch = "improve_random"
        parent = rng.choice(valid)
    else:
        trace.branch = "draft_fallback"
        return PolicyDecision(None, ActionKind.DRAFT), trace

    p_trick = rng.uniform()
    trace.p_trick = p_trick
    decision = PolicyDecision(
        parent, ActionKind.IMPROVE, with_tricks=p_trick < config.h_trick
    )
    return decision, trace


def select(
    tree: SolutionTree, config: PolicyConfig, rng: RandomSource
) -> PolicyDecision:
    """Pick the next (parent, action); consumes the same draws as decision_trace."""
    decision, _ = decision_trace(tree, config, rng)
    return decision
