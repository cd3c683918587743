"""Hierarchical labeling with self-consistency voting, and paper summaries.

Labeling runs several independent rounds; each round first picks the most
relevant top-level categories, then subcategories beneath them. Votes are
aggregated across rounds and ties break toward taxonomy order, so the
outcome is always well defined.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter

from ..errors import ParseFailure, SchemaViolation
from ..gateway import ChatRequest, Gateway, Message, Sampling
from .entries import (
    SUMMARY_FIELDS,
    LabelPath,
    PaperEntry,
    PaperSummary,
    Taxonomy,
    TrickEntry,
)

log = logging.getLogger(__name__)

LABELING_ROLE = "retriever"
LABELING_SAMPLING = Sampling(temperature=0.7, max_output_tokens=1024)
SUMMARY_SAMPLING = Sampling(temperature=0.2, max_output_tokens=2048)

_TOP_PROMPT = """\
You are organizing a knowledge base of machine learning techniques.
Select the most relevant top-level categories (at most 2) for the text below.

# Categories
{categories}

# Text
{text}

Respond with a JSON array of category names, most relevant first, \
e.g. ["Computer Vision"]. Respond with the JSON array only."""

_SUB_PROMPT = """\
You are organizing a knowledge base of machine learning techniques.
For the text below, pick the most appropriate subcategories (at most 3) \
from the options listed under each selected category.

# Options
{options}

# Text
{text}

Respond with a JSON array of objects, most relevant first, \
e.g. [{{"category": "Computer Vision", "subcategory": "Image Classification"}}]. \
Respond with the JSON array only."""

_SUMMARY_PROMPT = """\
Summarize the machine learning paper below for retrieval purposes.

# Title
{title}

# Content
{content}

Respond with a JSON object containing exactly these string fields:
"data_type" (kind of data used), "data_domain" (application domain),
"dataset_names" (datasets mentioned), "ml_tasks" (tasks addressed),
"techniques" (methods proposed or applied), "contributions" (key findings).
Respond with the JSON object only."""


def _extract_json(text: str):
    """Parse the first JSON value in *text*, tolerating a fenced block."""
    fenced = re.search(r"```(?:json)?\s*(.*?)```", text, flags=re.DOTALL)
    candidate = fenced.group(1) if fenced else text
    candidate = candidate.strip()
    start = min(
        (i for i in (candidate.find("["), candidate.find("{")) if i >= 0),
        default=-1,
    )
    if start < 0:
        raise ParseFailure(f"no JSON value in response: {text[:120]!r}")
    decoder = json.JSONDecoder()
    try:
        value, _ = decoder.raw_decode(candidate[start:])
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"invalid JSON in response: {exc}") from exc
    return value


def vote_labels(
    rounds: list[list[LabelPath]], taxonomy: Taxonomy
) -> list[LabelPath]:
    """Aggregate per-round label lists by vote count.

    Ordered by descending vote count; ties break toward taxonomy order, so
    the result is deterministic for any vote multiset.
    """
    counts: Counter[LabelPath] = Counter()
    for labels in rounds:
        counts.update(set(labels))  # one vote per label per round
    return sorted(
        counts, key=lambda label: (-counts[label], taxonomy.label_rank(label))
    )


def _one_labeling_round(
    text: str, taxonomy: Taxonomy, gateway: Gateway
) -> list[LabelPath]:
    categories = "\n".join(f"- {name}" for name in taxonomy.top_categories)
    top_request = ChatRequest(
        role=LABELING_ROLE,
        messages=(
            Message("user", _TOP_PROMPT.format(categories=categories, text=text)),
        ),
        sampling=LABELING_SAMPLING,
    )
    top_response = gateway.complete(top_request)
    raw_tops = _extract_json(top_response.text or "")
    if not isinstance(raw_tops, list):
        raise ParseFailure("top-category response is not a JSON array")
    tops = [t for t in raw_tops if isinstance(t, str) and t in taxonomy.top_categories]
    if not tops:
        return []

    options = "\n".join(
        f"- {top}: " + ", ".join(taxonomy.subcategories.get(top, ()))
        for top in tops
    )
    sub_request = ChatRequest(
        role=LABELING_ROLE,
        messages=(
            Message("user", _SUB_PROMPT.format(options=options, text=text)),
        ),
        sampling=LABELING_SAMPLING,
    )
    sub_response = gateway.complete(sub_request)
    raw_subs = _extract_json(sub_response.text or "")
    if not isinstance(raw_subs, list):
        raise ParseFailure("subcategory response is not a JSON array")
    labels: list[LabelPath] = []
    for item in raw_subs:
        if not isinstance(item, dict):
            continue
        label = LabelPath(
            top=str(item.get("category", "")), sub=str(item.get("subcategory", ""))
        )
        if taxonomy.contains(label) and label not in labels:
            labels.append(label)
    return labels


def label_text(
    text: str, taxonomy: Taxonomy, gateway: Gateway, rounds: int = 5
) -> list[LabelPath]:
    """Label arbitrary text with *rounds* independent passes plus voting."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if not taxonomy.top_categories:
        raise ValueError("taxonomy must be non-empty")
    results: list[list[LabelPath]] = []
    for round_no in range(rounds):
        try:
            results.append(_one_labeling_round(text, taxonomy, gateway))
        except ParseFailure as exc:
            log.warning("labeling round %d unparseable, skipped: %s", round_no, exc)
            results.append([])
    return vote_labels(results, taxonomy)


def label_entry(
    entry: TrickEntry, taxonomy: Taxonomy, gateway: Gateway, rounds: int = 5
) -> list[LabelPath]:
    return label_text(entry.embedding_text(), taxonomy, gateway, rounds)


def label_task(
    task_description: str, taxonomy: Taxonomy, gateway: Gateway, rounds: int = 5
) -> list[LabelPath]:
    return label_text(task_description, taxonomy, gateway, rounds)


def summarize_paper(entry: PaperEntry, gateway: Gateway) -> PaperSummary:
    """Fill the six-field retrieval summary for one paper."""
    if not entry.body:
        raise ValueError(f"paper {entry.id}: body must be non-empty")
    request = ChatRequest(
        role=LABELING_ROLE,
        messages=(
            Message(
                "user",
                _SUMMARY_PROMPT.format(title=entry.meta.title, content=entry.body),
            ),
        ),
        sampling=SUMMARY_SAMPLING,
    )
    response = gateway.complete(request)
    payload = _extract_json(response.text or "")
    if not isinstance(payload, dict):
        raise SchemaViolation("paper summary response is not a JSON object")
    values: dict[str, str] = {}
    for name in SUMMARY_FIELDS:
        value = payload.get(name)
        if not isinstance(value, str) or not value.strip():
            raise SchemaViolation(f"paper summary missing field {name!r}")
        values[name] = value.strip()
    summary = PaperSummary(**values)
    entry.summary = summary
    return summary
