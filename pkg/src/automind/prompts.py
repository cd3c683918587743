"""Prompt template loading and rendering.

Templates are versioned assets with ``{name}`` placeholders. Rendering
substitutes only the names present in the mapping and leaves every other
brace untouched (some templates contain literal JSON braces), so assembly is
a pure function of its inputs and golden-file testable.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

from .knowledge.entries import PaperEntry, TrickEntry

DEFAULT_INSTALLED_PACKAGES = (
    "torch-geometric==2.6.1",
    "xgboost==2.1.3",
    "torchvision==0.17.0",
    "lightgbm==4.5.0",
    "transformers==4.44.2",
    "matplotlib==3.9.2",
    "scipy==1.11.4",
    "statsmodels==0.14.4",
    "pandas==2.1.4",
    "torch==2.2.0",
    "optuna==4.0.0",
    "timm==0.9.7",
    "scikit-learn==1.2.2",
    "numpy==1.26.2",
    "bayesian-optimization==1.5.1",
    "seaborn==0.13.2",
)

EMPTY_KNOWLEDGE_MARKER = "(no external knowledge available for this task)"
EMPTY_MEMORY_MARKER = "(no previous solutions recorded)"

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Read a bundled template by stem, e.g. ``draft`` or ``one_pass``."""
    return (
        resources.files("automind.templates").joinpath(f"{name}.md").read_text("utf-8")
    )


def render(template: str, mapping: dict[str, str]) -> str:
    """Substitute ``{key}`` for every key present in *mapping*.

    Unknown placeholders and literal braces pass through unchanged; a key in
    the mapping that never appears in the template is an error, which keeps
    templates and call sites honest.
    """
    used: set[str] = set()

    def substitute(match: re.Match) -> str:
        key = match.group(1)
        if key in mapping:
            used.add(key)
            return mapping[key]
        return match.group(0)

    rendered = _PLACEHOLDER_RE.sub(substitute, template)
    unused = set(mapping) - used
    if unused:
        raise KeyError(f"mapping keys not present in template: {sorted(unused)}")
    return rendered


def format_packages(packages: tuple[str, ...] = DEFAULT_INSTALLED_PACKAGES) -> str:
    return ", ".join(f"'{p}'" for p in packages)


def format_tricks(tricks: list[TrickEntry]) -> str:
    if not tricks:
        return EMPTY_KNOWLEDGE_MARKER
    sections = []
    for i, trick in enumerate(tricks, start=1):
        sections.append(f"## Trick {i}: {trick.title}\n\n{trick.body.strip()}")
    return "\n\n".join(sections)


def format_papers(papers: list[PaperEntry]) -> str:
    if not papers:
        return EMPTY_KNOWLEDGE_MARKER
    sections = []
    for i, paper in enumerate(papers, start=1):
        body = (
            paper.summary.concatenated()
            if paper.summary is not None
            else paper.meta.abstract
        )
        sections.append(f"## Paper {i}: {paper.meta.title}\n\n{body.strip()}")
    return "\n\n".join(sections)
