"""Self-adaptive coding: complexity scoring routes a plan to one-pass
generation or to stepwise generation with per-substep checks and retries.

Stepwise coding drives a stateful execution session: each substep's fragment
must pass a syntax check over everything accepted so far plus itself, then
run cleanly in the session, before the next substep starts. Failures feed
the error text back into a regeneration, at most ``retry_limit`` generation
attempts per substep; exhausting them abandons the plan.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .errors import ParseFailure, SessionLost
from .gateway import ChatRequest, Gateway, Message, Sampling
from .prompts import format_packages, load_template, render
from .sandbox import Executor, Workspace

log = logging.getLogger(__name__)

CODER_SAMPLING = Sampling(temperature=0.2, max_output_tokens=16384)

ONE_PASS = "one_pass"
STEPWISE = "stepwise"

_SCORE_RE = re.compile(r"<score>\s*(.*?)\s*</score>", re.DOTALL)
_CODE_BLOCK_RE = re.compile(r"```[a-zA-Z0-9_+-]*\n(.*?)```", re.DOTALL)
_THINK_RE = re.compile(r"<think>.*?</think>", re.DOTALL)


@dataclass(frozen=True)
class ComplexityScore:
    """Task-plus-plan difficulty on a five-point scale in half-point steps."""

    value: float

    def __post_init__(self) -> None:
        if not 1.0 <= self.value <= 5.0:
            raise ValueError(f"score must be in [1, 5], got {self.value}")
        if (2 * self.value) != int(2 * self.value):
            raise ValueError(f"score must be a multiple of 0.5, got {self.value}")


@dataclass(frozen=True)
class Substep:
    name: str
    details: str

    def __post_init__(self) -> None:
        if not self.name or not self.details:
            raise ValueError("substep name and details must be non-empty")

    def render(self) -> str:
        return f"{self.name}\n\n{self.details}"


@dataclass(frozen=True)
class StepPlan:
    steps: tuple[Substep, ...]

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("a step plan must contain at least one step")


@dataclass(frozen=True)
class CoderConfig:
    complexity_threshold: float = 3.0
    retry_limit: int = 3
    max_steps: int = 12

    def __post_init__(self) -> None:
        if not 1.0 <= self.complexity_threshold <= 5.0:
            raise ValueError("complexity_threshold must be in [1, 5]")
        if self.retry_limit < 1:
            raise ValueError("retry_limit must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class SubstepLog:
    step_index: int
    attempts: int
    outcome: str  # "ok" | "abandoned"
    duration: float


@dataclass
class StepwiseSuccess:
    code: str
    output: str
    duration: float
    logs: list[SubstepLog]


@dataclass
class Abandoned:
    """Normal stepwise outcome when a substep exhausts its retries."""

    substep_index: int
    last_error: str
    logs: list[SubstepLog] = field(default_factory=list)


def extract_single_code_block(text: str) -> str:
    """The contents of exactly one fenced code block, else ParseFailure."""
    stripped = _THINK_RE.sub("", text)
    blocks = _CODE_BLOCK_RE.findall(stripped)
    if len(blocks) != 1:
        raise ParseFailure(
            f"expected exactly one fenced code block, found {len(blocks)}"
        )
    return blocks[0].strip("\n")


def parse_score(text: str) -> ComplexityScore:
    """Parse <score>...</score>, snapping to the half-point grid when the
    value is within 0.05 of a grid point."""
    match = _SCORE_RE.search(text)
    if not match:
        raise ParseFailure("no <score></score> tag in response")
    try:
        raw = float(match.group(1))
    except ValueError as exc:
        raise ParseFailure(f"score is not a number: {match.group(1)!r}") from exc
    snapped = round(raw * 2) / 2
    if abs(snapped - raw) > 0.05 + 1e-9:
        raise ParseFailure(f"score {raw} is not on the half-point grid")
    if not 1.0 <= snapped <= 5.0:
        raise ParseFailure(f"score {raw} is outside [1, 5]")
    return ComplexityScore(snapped)


def _complete_text(gateway: Gateway, role: str, prompt: str, extra: str | None = None) -> str:
    messages = [Message("user", prompt)]
    if extra:
        messages.append(Message("user", extra))
    response = gateway.complete(
        ChatRequest(role=role, messages=tuple(messages), sampling=CODER_SAMPLING)
    )
    return response.text or ""


def score_complexity(
    task_description: str, plan: str, analysis: str, gateway: Gateway
) -> ComplexityScore:
    """LLM-as-a-judge complexity score with one corrective reprompt; falls
    back to the routing midpoint (3.0) when both parses fail."""
    if not plan:
        raise ValueError("plan must be non-empty")
    prompt = render(
        load_template("complexity"),
        {
            "task_description": task_description,
            "proposed_solution": plan,
            "data_analysis": analysis,
        },
    )
    try:
        return parse_score(_complete_text(gateway, "coder", prompt))
    except ParseFailure as exc:
        log.warning("complexity score rejected, reprompting once: %s", exc)
    reprompt = (
        "Your previous response did not contain a valid score. Respond with "
        "ONLY ONE average complexity score between 1 and 5 in 0.5 steps, "
        "wrapped in <score></score>."
    )
    try:
        return parse_score(_complete_text(gateway, "coder", prompt, reprompt))
    except ParseFailure as exc:
        log.warning("complexity score failed twice, defaulting to 3.0: %s", exc)
        return ComplexityScore(3.0)


def route(score: ComplexityScore, config: CoderConfig) -> str:
    """Below the threshold codes in one pass; at or above goes stepwise."""
    return ONE_PASS if score.value < config.complexity_threshold else STEPWISE


def code_one_pass(
    task_description: str, plan: str, analysis: str, gateway: Gateway
) -> str:
    """Generate the whole solution script as a single fenced code block."""
    if not plan:
        raise ValueError("plan must be non-empty")
    prompt = render(
        load_template("one_pass"),
        {
            "task_description": task_description,
            "proposed_solution": plan,
            "data_analysis": analysis,
            "installed_packages": format_packages(),
        },
    )
    try:
        return extract_single_code_block(_complete_text(gateway, "coder", prompt))
    except ParseFailure as exc:
        log.warning("one-pass code rejected, reprompting once: %s", exc)
    reprompt = (
        "Your previous response was not usable. Respond with exactly one "
        "markdown code block (wrapped in ```) containing the complete script."
    )
    return extract_single_code_block(_complete_text(gateway, "coder", prompt, reprompt))


def _parse_step_plan(text: str, max_steps: int) -> StepPlan:
    import json

    block_match = _CODE_BLOCK_RE.search(_THINK_RE.sub("", text))
    candidate = block_match.group(1) if block_match else text
    start = candidate.find("{")
    if start < 0:
        raise ParseFailure("no JSON object in decomposition response")
    try:
        payload, _ = json.JSONDecoder().raw_decode(candidate[start:])
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"invalid decomposition JSON: {exc}") from exc
    raw_steps = payload.get("decomposed steps", payload.get("decomposed_steps"))
    if not isinstance(raw_steps, list) or not raw_steps:
        raise ParseFailure("decomposition JSON has no steps")
    steps: list[Substep] = []
    for item in raw_steps:
        if not isinstance(item, dict):
            raise ParseFailure(f"malformed step entry: {item!r}")
        name = str(item.get("step", "")).strip()
        details = str(item.get("details", "")).strip()
        if not name or not details:
            raise ParseFailure(f"step entry missing name or details: {item!r}")
        steps.append(Substep(name=name, details=details))
    if len(steps) > max_steps:
        head = steps[: max_steps - 1]
        tail = steps[max_steps - 1 :]
        merged = Substep(
            name=tail[0].name,
            details="\n\n".join(f"{s.name}: {s.details}" for s in tail),
        )
        steps = head + [merged]
    return StepPlan(steps=tuple(steps))


def decompose(
    task_description: str, plan: str, gateway: Gateway, config: CoderConfig
) -> StepPlan:
    """Decompose the plan into ordered substeps, capped at max_steps."""
    if not plan:
        raise ValueError("plan must be non-empty")
    prompt = render(
        load_template("decompose"),
        {"task_description": task_description, "proposed_solution": plan},
    )
    try:
        return _parse_step_plan(_complete_text(gateway, "coder", prompt), config.max_steps)
    except ParseFailure as exc:
        log.warning("decomposition rejected, reprompting once: %s", exc)
    reprompt = (
        "Your previous response was not usable. Respond with a single JSON "
        'code block of the form {"decomposed steps": [{"step": ..., '
        '"details": ...}, ...]}.'
    )
    return _parse_step_plan(
        _complete_text(gateway, "coder", prompt, reprompt), config.max_steps
    )


def _failed_try_note(code: str | None, error: str) -> str:
    parts = ["# Failed Last Try"]
    if code:
        parts.append(f"## Code\n\n```python\n{code}\n```")
    parts.append(f"## Error\n\n{error}")
    return "\n\n".join(parts)


def code_stepwise(
    task_description: str,
    step_plan: StepPlan,
    analysis: str,
    workspace: Workspace,
    executor: Executor,
    gateway: Gateway,
    config: CoderConfig,
    fragment_timeout: float,
) -> StepwiseSuccess | Abandoned:
    """Generate and execute each substep in order inside one session.

    Every accepted fragment stays part of the growing script; the syntax
    check always validates the accepted prefix plus the candidate, since a
    continuation can be incomplete in isolation. A fragment that fails its
    syntax check is never executed.
    """
    session = executor.open_session(workspace)
    accepted: list[str] = []
    outputs: list[str] = []
    total_duration = 0.0
    logs: list[SubstepLog] = []
    try:
        for index, step in enumerate(step_plan.steps, start=1):
            prev_code = "\n\n".join(accepted) if accepted else "(no previous steps)"
            prompt = render(
                load_template("stepwise"),
                {
                    "task_description": task_description,
                    "current_step": step.render(),
                    "prev_steps": prev_code,
                    "data_analysis": analysis,
                    "installed_packages": format_packages(),
                },
            )
            last_error = ""
            last_code: str | None = None
            step_duration = 0.0
            accepted_fragment: str | None = None
            attempts = 0
            while attempts < config.retry_limit:
                attempts += 1
                extra = _failed_try_note(last_code, last_error) if last_error else None
                try:
                    fragment = extract_single_code_block(
                        _complete_text(gateway, "coder", prompt, extra)
                    )
                except ParseFailure as exc:
                    last_error, last_code = str(exc), None
                    continue
                last_code = fragment
                candidate_script = "\n\n".join(accepted + [fragment])
                syntax_error = executor.check_syntax(session, candidate_script)
                if syntax_error is not None:
                    last_error = syntax_error
                    continue
                try:
                    result = executor.exec_fragment(session, fragment, fragment_timeout)
                except SessionLost as exc:
                    logs.append(SubstepLog(index, attempts, "abandoned", step_duration))
                    return Abandoned(
                        substep_index=index,
                        last_error=f"execution session lost: {exc}",
                        logs=logs,
                    )
                step_duration += result.duration
                total_duration += result.duration
                if result.timed_out:
                    last_error = "execution timed out:\n" + result.output
                    session = _recover_session(
                        executor, session, workspace, accepted, fragment_timeout
                    )
                    if session is None:
                        logs.append(
                            SubstepLog(index, attempts, "abandoned", step_duration)
                        )
                        return Abandoned(
                            substep_index=index,
                            last_error="session could not be recovered after a timeout",
                            logs=logs,
                        )
                    continue
                if not result.exit_ok:
                    last_error = result.output
                    continue
                accepted_fragment = fragment
                outputs.append(result.output)
                break
            if accepted_fragment is None:
                logs.append(SubstepLog(index, attempts, "abandoned", step_duration))
                return Abandoned(
                    substep_index=index, last_error=last_error, logs=logs
                )
            accepted.append(accepted_fragment)
            logs.append(SubstepLog(index, attempts, "ok", step_duration))
        return StepwiseSuccess(
            code="\n\n".join(accepted),
            output="".join(
                out if out.endswith("\n") or not out else out + "\n" for out in outputs
            ),
            duration=total_duration,
            logs=logs,
        )
    finally:
        executor.close(session)


def _recover_session(executor, dead_session, workspace, accepted, timeout):
    """Rebuild session state after a timeout killed the interpreter.

    Replays the accepted fragments in a fresh session; returns the new
    session or None when replay fails.
    """
    try:
        executor.close(dead_session)
    except SessionLost:
        pass
    session = executor.open_session(workspace)
    if not accepted:
        return session
    try:
        result = executor.exec_fragment(session, "\n\n".join(accepted), timeout)
    except SessionLost:
        return None
    return session if result.exit_ok else None
