"""Run configuration: flat dotted-key config files, validation, defaults.

Config files are plain text, one ``key = value`` per line, ``#`` comments.
Key names match the agent's published hyperparameter names one to one
(``agent.search.num_drafts``, ``agent.search.debug_prob``, ...); unknown
keys are rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

from .coder import CoderConfig
from .errors import FatalConfigError, ValidationFailure
from .gateway import ENV_API_BASE, ENV_API_KEY, RoleModelConfig
from .policy import PolicyConfig

# Placeholder model id for the roles the operator must point at the model
# under evaluation; replay runs never resolve it.
TARGET_MODEL = "&TARGET_MODEL"

DEFAULT_MODELS = RoleModelConfig(
    retriever="gpt-4o-mini-2024-07-18",
    analyzer="gpt-4o-mini-2024-07-18",
    planner=TARGET_MODEL,
    coder=TARGET_MODEL,
    improver=TARGET_MODEL,
    verifier="gpt-4.1-mini-2025-04-14",
)

DEFAULT_RUNNER_CMD = "python3 -m automind_runner"


@dataclass(frozen=True)
class RunConfig:
    policy: PolicyConfig = PolicyConfig()
    coder: CoderConfig = CoderConfig()
    models: RoleModelConfig = DEFAULT_MODELS
    steps: int = 500
    time_limit: float = 86400.0
    exec_timeout: float = 32400.0
    token_budget: int | None = None
    knowledge_enabled: bool = True
    seed: int = 0
    memory_bound: int = 10
    papers_per_draft: int = 3
    tricks_per_improve: int = 3
    analyzer_refine: bool = True
    labeling_rounds: int = 5
    runner_cmd: str = DEFAULT_RUNNER_CMD
    task_dir: Path | None = None
    index_dir: Path | None = None
    output_dir: Path = Path("runs")
    api_base: str | None = None
    api_key: str | None = None

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValidationFailure("agent.steps must be >= 1")
        if self.time_limit <= 0:
            raise ValidationFailure("agent.time_limit must be > 0")
        if self.exec_timeout > self.time_limit:
            raise ValidationFailure(
                "exec.timeout must not exceed agent.time_limit"
            )

    def runner_argv(self) -> list[str]:
        return shlex.split(self.runner_cmd)


def _set_policy(config: RunConfig, **kwargs) -> RunConfig:
    return replace(config, policy=replace(config.policy, **kwargs))

def _set_coder(config: RunConfig, **kwargs) -> RunConfig:
    return replace(config, coder=replace(config.coder, **kwargs))

def _set_models(config: RunConfig, **kwargs) -> RunConfig:
    return replace(config, models=replace(config.models, **kwargs))


def _probability(key: str, raw: str) -> float:
    value = _number(key, raw)
    if not 0.0 <= value <= 1.0:
        raise ValidationFailure(f"{key} must be in [0, 1], got {value}")
    return value


def _number(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ValidationFailure(f"{key} expects a number, got {raw!r}") from None


def _integer(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ValidationFailure(f"{key} expects an integer, got {raw!r}") from None


def _boolean(key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    raise ValidationFailure(f"{key} expects true or false, got {raw!r}")


# key -> closure applying the parsed value onto a RunConfig
_KNOWN_KEYS = {
    "agent.retriever.model": lambda c, k, v: _set_models(c, retriever=v),
    "agent.analyzer.model": lambda c, k, v: _set_models(c, analyzer=v),
    "agent.planner.model": lambda c, k, v: _set_models(c, planner=v),
    "agent.coder.model": lambda c, k, v: _set_models(c, coder=v),
    "agent.improver.model": lambda c, k, v: _set_models(c, improver=v),
    "agent.verifier.model": lambda c, k, v: _set_models(c, verifier=v),
    "agent.steps": lambda c, k, v: replace(c, steps=_integer(k, v)),
    "agent.time_limit": lambda c, k, v: replace(c, time_limit=_number(k, v)),
    "exec.timeout": lambda c, k, v: replace(c, exec_timeout=_number(k, v)),
    "agent.search.num_drafts": lambda c, k, v: _set_policy(c, n_init=_integer(k, v)),
    "agent.search.debug_prob": lambda c, k, v: _set_policy(c, h_debug=_probability(k, v)),
    "agent.search.greedy_prob": lambda c, k, v: _set_policy(c, h_greedy=_probability(k, v)),
    "agent.search.trick_prob": lambda c, k, v: _set_policy(c, h_trick=_probability(k, v)),
    "agent.search.max_debug_depth": lambda c, k, v: _set_policy(
        c, max_debug_depth=_integer(k, v)
    ),
    "agent.seed": lambda c, k, v: replace(c, seed=_integer(k, v)),
    "agent.token_budget": lambda c, k, v: replace(c, token_budget=_integer(k, v)),
    "agent.memory.bound": lambda c, k, v: replace(c, memory_bound=_integer(k, v)),
    "agent.retrieval.papers": lambda c, k, v: replace(
        c, papers_per_draft=_integer(k, v)
    ),
    "agent.retrieval.tricks": lambda c, k, v: replace(
        c, tricks_per_improve=_integer(k, v)
    ),
    "agent.analyzer.refine": lambda c, k, v: replace(
        c, analyzer_refine=_boolean(k, v)
    ),
    "agent.labeling.rounds": lambda c, k, v: replace(
        c, labeling_rounds=_integer(k, v)
    ),
    "agent.coder.complexity_threshold": lambda c, k, v: _set_coder(
        c, complexity_threshold=_number(k, v)
    ),
    "agent.coder.retry_limit": lambda c, k, v: _set_coder(c, retry_limit=_integer(k, v)),
    "agent.coder.max_steps": lambda c, k, v: _set_coder(c, max_steps=_integer(k, v)),
    "knowledge.enabled": lambda c, k, v: replace(
        c, knowledge_enabled=_boolean(k, v)
    ),
    "sandbox.runner_cmd": lambda c, k, v: replace(c, runner_cmd=v),
}


def load_config(path: str | Path | None, env: Mapping[str, str]) -> RunConfig:
    """Build a RunConfig from a flat key-value file plus the environment.

    An absent path yields pure defaults. Every key must be known and every
    value in range; violations name the offending key.
    """
    config = RunConfig(
        api_base=env.get(ENV_API_BASE) or None,
        api_key=env.get(ENV_API_KEY) or None,
    )
    if path is None:
        return config
    path = Path(path)
    if not path.is_file():
        raise FatalConfigError(f"config file not found: {path}")
    for line_no, raw_line in enumerate(
        path.read_text(encoding="utf-8").splitlines(), start=1
    ):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FatalConfigError(
                f"{path}:{line_no}: expected 'key = value', got {raw_line!r}"
            )
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        setter = _KNOWN_KEYS.get(key)
        if setter is None:
            raise ValidationFailure(f"{path}:{line_no}: unknown config key {key!r}")
        try:
            config = setter(config, key, value)
        except ValidationFailure:
            raise
        except ValueError as exc:
            raise ValidationFailure(f"{key}: {exc}") from exc
    return config


def config_to_dict(config: RunConfig) -> dict:
    """Flat representation with the published key names, for result files."""
    return {
        "agent.retriever.model": config.models.retriever,
        "agent.analyzer.model": config.models.analyzer,
        "agent.planner.model": config.models.planner,
        "agent.coder.model": config.models.coder,
        "agent.improver.model": config.models.improver,
        "agent.verifier.model": config.models.verifier,
        "agent.steps": config.steps,
        "agent.search.num_drafts": config.policy.n_init,
        "agent.search.max_debug_depth": config.policy.max_debug_depth,
        "agent.search.debug_prob": config.policy.h_debug,
        "agent.search.trick_prob": config.policy.h_trick,
        "agent.search.greedy_prob": config.policy.h_greedy,
        "agent.time_limit": config.time_limit,
        "exec.timeout": config.exec_timeout,
        "agent.seed": config.seed,
        "knowledge.enabled": config.knowledge_enabled,
    }
