"""Deterministic profiling of the task input data, with optional LLM
refinement by the analyzer role."""

from __future__ import annotations

import logging
from pathlib import Path

from .errors import LlmFailure, WorkspaceMissingError
from .gateway import ChatRequest, Gateway, Message, Sampling
from .sandbox import Workspace

log = logging.getLogger(__name__)

TEXT_SUFFIXES = {".csv", ".tsv", ".txt", ".json", ".md", ".yaml", ".yml"}
MAX_INLINE_BYTES = 64 * 1024
PREVIEW_LINES = 5
PREVIEW_LINE_CHARS = 200

_REFINE_PROMPT = """\
You are a data analyst preparing notes for a machine learning engineer.
Below is a raw profile of the files available for a task. Write a concise
data analysis: what the files contain, how they relate, and anything an
engineer must know before loading them. Keep every concrete number from the
profile that matters.

# Task description

{description}

# Raw profile

{profile}"""


def _describe_tabular(path: Path) -> list[str]:
    text = path.read_text(encoding="utf-8", errors="replace")
    lines = text.splitlines()
    rows = max(len(lines) - 1, 0)
    details = []
    if lines:
        header = lines[0][:PREVIEW_LINE_CHARS]
        columns = len(lines[0].split("\t" if path.suffix == ".tsv" else ","))
        details.append(f"  rows: {rows}, columns: {columns}")
        details.append(f"  header: {header}")
    for line in lines[1 : 1 + PREVIEW_LINES]:
        details.append(f"  | {line[:PREVIEW_LINE_CHARS]}")
    return details


def _describe_text(path: Path) -> list[str]:
    text = path.read_text(encoding="utf-8", errors="replace")
    return [
        f"  | {line[:PREVIEW_LINE_CHARS]}"
        for line in text.splitlines()[:PREVIEW_LINES]
    ]


def analyze_data(workspace: Workspace) -> str:
    """Textual profile of ``./input``: file listing with sizes, previews of
    small text files, and row/column counts for tabular files.

    Binary files are listed with their size only, never inlined. The profile
    is a pure function of the directory contents.
    """
    input_dir = workspace.input_dir
    if not input_dir.is_dir():
        raise WorkspaceMissingError(f"input directory not found: {input_dir}")
    files = sorted(p for p in input_dir.rglob("*") if p.is_file())
    if not files:
        return "The ./input directory contains no files."
    lines = [f"Files in ./input ({len(files)} total):"]
    for path in files:
        rel = path.relative_to(input_dir)
        size = path.stat().st_size
        lines.append(f"- {rel} ({size} bytes)")
        if size > MAX_INLINE_BYTES or path.suffix.lower() not in TEXT_SUFFIXES:
            continue
        if path.suffix.lower() in {".csv", ".tsv"}:
            lines.extend(_describe_tabular(path))
        else:
            lines.extend(_describe_text(path))
    return "\n".join(lines)


def refine_analysis(profile: str, description: str, gateway: Gateway) -> str:
    """One analyzer-role pass over the static profile; falls back to the
    raw profile when the model call fails."""
    request = ChatRequest(
        role="analyzer",
        messages=(
            Message(
                "user",
                _REFINE_PROMPT.format(description=description, profile=profile),
            ),
        ),
        sampling=Sampling(temperature=0.2, max_output_tokens=2048),
    )
    try:
        response = gateway.complete(request)
    except LlmFailure as exc:
        log.warning("analyzer refinement failed, using raw profile: %s", exc)
        return profile
    return (response.text or "").strip() or profile
