"""Corpus ingestion from the on-disk layout.

Layout::

    corpus/tricks/<task_id>/<post_id>.md   header block, blank line, body
    corpus/papers/<paper_id>.md            header block, blank line, body

The header block is leading ``key: value`` lines. Trick headers require
``title`` and ``source_task_id`` (the directory name is the fallback task
id); paper headers require ``title`` and may carry authors, venue, year,
keywords, and abstract. Malformed files are reported as warnings, never
fatal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from ..errors import MissingCorpusError
from .entries import PaperEntry, PaperMeta, TrickEntry

log = logging.getLogger(__name__)

TRICKS_DIR = "tricks"
PAPERS_DIR = "papers"


@dataclass(frozen=True)
class ParseWarning:
    path: str
    reason: str


def _split_header(text: str) -> tuple[dict[str, str], str]:
    """Split leading ``key: value`` lines from the body."""
    header: dict[str, str] = {}
    lines = text.splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        stripped = line.strip()
        if not stripped:
            body_start = i + 1
            break
        if ":" not in stripped:
            body_start = i
            break
        key, _, value = stripped.partition(":")
        header[key.strip().lower()] = value.strip()
        body_start = i + 1
    body = "\n".join(lines[body_start:]).strip()
    return header, body


def ingest_corpus(
    corpus_root: str | Path,
) -> tuple[list[TrickEntry], list[PaperEntry], list[ParseWarning]]:
    """Read every well-formed trick and paper file under *corpus_root*."""
    root = Path(corpus_root)
    if not root.is_dir():
        raise MissingCorpusError(f"corpus root not found: {root}")

    tricks: list[TrickEntry] = []
    papers: list[PaperEntry] = []
    warnings: list[ParseWarning] = []

    tricks_root = root / TRICKS_DIR
    if tricks_root.is_dir():
        for path in sorted(tricks_root.rglob("*.md")):
            header, body = _split_header(path.read_text(encoding="utf-8"))
            task_id = header.get("source_task_id") or path.parent.name
            title = header.get("title", "")
            if not title or not body:
                warnings.append(
                    ParseWarning(str(path), "missing title header or empty body")
                )
                continue
            tricks.append(
                TrickEntry(
                    id=f"{task_id}/{path.stem}",
                    source_task_id=task_id,
                    title=title,
                    body=body,
                )
            )

    papers_root = root / PAPERS_DIR
    if papers_root.is_dir():
        for path in sorted(papers_root.glob("*.md")):
            header, body = _split_header(path.read_text(encoding="utf-8"))
            title = header.get("title", "")
            if not title or not body:
                warnings.append(
                    ParseWarning(str(path), "missing title header or empty body")
                )
                continue
            papers.append(
                PaperEntry(
                    id=path.stem,
                    meta=PaperMeta(
                        title=title,
                        authors=header.get("authors", ""),
                        abstract=header.get("abstract", ""),
                        keywords=header.get("keywords", ""),
                        venue=header.get("venue", ""),
                        year=header.get("year", ""),
                    ),
                    body=body,
                )
            )

    for warning in warnings:
        log.warning("skipped corpus file %s: %s", warning.path, warning.reason)
    return tricks, papers, warnings
