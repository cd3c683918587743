"""Output verification: a verifier-role tool call hardened by deterministic
overrides from the execution result and the filesystem."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

from .errors import SchemaViolation
from .gateway import ChatRequest, ChatResponse, Gateway, Message, Sampling
from .prompts import load_template, render
from .sandbox import ExecResult, Workspace, collect_artifacts

log = logging.getLogger(__name__)

SUBMISSION_VERIFY_TOOL = {
    "type": "function",
    "function": {
        "name": "submission_verify",
        "description": "Verify the execution output of the written code.",
        "parameters": {
            "type": "object",
            "properties": {
                "is_bug": {
                    "type": "boolean",
                    "description": (
                        "true if the output log shows that the execution failed "
                        "or has some bug, otherwise false."
                    ),
                },
                "is_overfitting": {
                    "type": "boolean",
                    "description": (
                        "true if the output log shows that the model is "
                        "overfitting or validation metric is much worse than the "
                        "training metric or validation loss is increasing, "
                        "otherwise false. "
                    ),
                },
                "has_csv_submission": {
                    "type": "boolean",
                    "description": (
                        "true if the code saves the predictions on the test data "
                        "in a 'submission.csv' file in the './submission/' "
                        "directory, otherwise false. Note that the file MUST be "
                        "saved in the ./submission/ directory for this to be "
                        "evaluated as true, otherwise it should be evaluated as "
                        "false. You can assume the ./submission/ directory exists "
                        "and is writable."
                    ),
                },
                "summary": {
                    "type": "string",
                    "description": (
                        "write a short summary (2-3 sentences) describing the "
                        "empirical findings. Alternatively mention if there is a "
                        "bug or the submission.csv was not properly produced. "
                        "You do not need to suggest fixes or improvements."
                    ),
                },
                "metric": {
                    "type": "number",
                    "description": (
                        "If the code ran successfully, report the value of the "
                        "validation metric. Otherwise, leave it null."
                    ),
                },
                "lower_is_better": {
                    "type": "boolean",
                    "description": (
                        "true if the metric should be minimized (i.e. a lower "
                        "metric value is better, such as with MSE), false if the "
                        "metric should be maximized (i.e. a higher metric value "
                        "is better, such as with accuracy)."
                    ),
                },
            },
            "required": [
                "is_bug",
                "is_overfitting",
                "has_csv_submission",
                "summary",
                "metric",
                "lower_is_better",
            ],
        },
    },
}

VERIFIER_SAMPLING = Sampling(temperature=0.2, max_output_tokens=2048)

_REPROMPT_NOTE = (
    "Your previous response was not a valid submission_verify tool call. "
    "Respond by calling the submission_verify tool with every required field."
)


@dataclass(frozen=True)
class Verdict:
    """Structured verification result, mirroring the tool schema."""

    is_bug: bool
    is_overfitting: bool
    has_csv_submission: bool
    summary: str
    metric: float | None
    lower_is_better: bool

    def __post_init__(self) -> None:
        if not self.is_bug and self.metric is None:
            raise ValueError("a non-buggy verdict must report a metric")


def _verdict_from_response(response: ChatResponse) -> Verdict:
    if response.kind != "tool_call" or response.tool_name != "submission_verify":
        raise SchemaViolation("verifier did not call submission_verify")
    args = response.tool_arguments or {}
    metric = args.get("metric")
    if metric is not None:
        metric = float(metric)
    if not args.get("is_bug", False) and metric is None:
        raise SchemaViolation("verdict claims success but reports no metric")
    return Verdict(
        is_bug=bool(args["is_bug"]),
        is_overfitting=bool(args["is_overfitting"]),
        has_csv_submission=bool(args["has_csv_submission"]),
        summary=str(args["summary"]),
        metric=metric,
        lower_is_better=bool(args["lower_is_better"]),
    )


def apply_overrides(
    verdict: Verdict, exec_result: ExecResult, workspace: Workspace
) -> Verdict:
    """Deterministic filesystem and exit-status overrides.

    A timed-out or failed execution is a bug regardless of what the model
    said, and a missing ./submission/submission.csv forces both
    has_csv_submission=false and is_bug=true.
    """
    notes: list[str] = []
    if exec_result.timed_out:
        notes.append("execution timed out")
    elif not exec_result.exit_ok:
        notes.append("execution exited with an error")
    if not collect_artifacts(workspace).has_submission:
        notes.append("no submission.csv found in ./submission/")
        verdict = replace(verdict, has_csv_submission=False)
    if notes:
        summary = verdict.summary.rstrip()
        note_text = "; ".join(notes)
        summary = f"{summary} [{note_text}]" if summary else f"[{note_text}]"
        verdict = replace(verdict, is_bug=True, summary=summary)
    return verdict


def verify_output(
    task_description: str,
    code: str,
    exec_result: ExecResult,
    workspace: Workspace,
    gateway: Gateway,
) -> Verdict:
    """Ask the verifier role to judge the execution, then harden the verdict.

    A malformed tool call gets one corrective reprompt; if that also fails,
    the action degrades to a synthetic buggy verdict instead of aborting.
    """
    prompt = render(
        load_template("verify"),
        {
            "task_description": task_description,
            "code": code,
            "execution_output": exec_result.output,
        },
    )
    messages = (Message("user", prompt),)
    request = ChatRequest(
        role="verifier",
        messages=messages,
        tool_schema=SUBMISSION_VERIFY_TOOL,
        sampling=VERIFIER_SAMPLING,
    )
    verdict: Verdict | None = None
    try:
        verdict = _verdict_from_response(gateway.complete(request))
    except SchemaViolation as exc:
        log.warning("verifier response rejected, reprompting once: %s", exc)
        retry = ChatRequest(
            role="verifier",
            messages=messages + (Message("user", _REPROMPT_NOTE),),
            tool_schema=SUBMISSION_VERIFY_TOOL,
            sampling=VERIFIER_SAMPLING,
        )
        try:
            verdict = _verdict_from_response(gateway.complete(retry))
        except SchemaViolation as retry_exc:
            log.warning("verifier reprompt rejected: %s", retry_exc)
            verdict = Verdict(
                is_bug=True,
                is_overfitting=False,
                has_csv_submission=False,
                summary="verifier failed to produce a structured verdict",
                metric=None,
                lower_is_better=False,
            )
    return apply_overrides(verdict, exec_result, workspace)
