"""Knowledge-grounded tree search agent for automated data science tasks.

The agent explores candidate solutions (plan, code, metric) as a tree:
drafting new solutions, improving valid ones with retrieved expert
knowledge, and debugging buggy ones, under step and wall-clock budgets.
Code generation adapts to plan complexity, switching between one-pass and
stepwise strategies.
"""

from .actions import ActionDeps, MemoryDigest, TaskSpec, build_memory, run_action
from .coder import (
    Abandoned,
    CoderConfig,
    ComplexityScore,
    StepPlan,
    Substep,
    code_one_pass,
    code_stepwise,
    decompose,
    route,
    score_complexity,
)
from .config import RunConfig, load_config
from .gateway import (
    ChatRequest,
    ChatResponse,
    Gateway,
    HttpBackend,
    Message,
    RecordingBackend,
    ReplayBackend,
    RoleModelConfig,
    Usage,
)
from .policy import PolicyConfig, PolicyDecision, RandomSource, decision_trace, select
from .runloop import RunResult, run
from .sandbox import (
    ExecResult,
    FakeExecutor,
    FakeOutcome,
    ShimExecutor,
    Workspace,
    collect_artifacts,
    prepare_workspace,
)
from .tree import (
    ActionKind,
    MetricValue,
    NodeStatus,
    SolutionNode,
    SolutionTree,
    truncate_output,
)
from .verifier import Verdict, verify_output

__version__ = "0.1.0"

__all__ = [
    "Abandoned",
    "ActionDeps",
    "ActionKind",
    "ChatRequest",
    "ChatResponse",
    "CoderConfig",
    "ComplexityScore",
    "ExecResult",
    "FakeExecutor",
    "FakeOutcome",
    "Gateway",
    "HttpBackend",
    "MemoryDigest",
    "Message",
    "MetricValue",
    "NodeStatus",
    "PolicyConfig",
    "PolicyDecision",
    "RandomSource",
    "RecordingBackend",
    "ReplayBackend",
    "RoleModelConfig",
    "RunConfig",
    "RunResult",
    "ShimExecutor",
    "SolutionNode",
    "SolutionTree",
    "StepPlan",
    "Substep",
    "TaskSpec",
    "Usage",
    "Verdict",
    "Workspace",
    "build_memory",
    "code_one_pass",
    "code_stepwise",
    "collect_artifacts",
    "decision_trace",
    "decompose",
    "load_config",
    "prepare_workspace",
    "route",
    "run",
    "run_action",
    "score_complexity",
    "select",
    "truncate_output",
    "verify_output",
]
