"""Knowledge-base domain types: taxonomy, labels, tricks, papers, queries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path


@dataclass(frozen=True)
class LabelPath:
    top: str
    sub: str

    def __str__(self) -> str:
        return f"{self.top} / {self.sub}"


@dataclass(frozen=True)
class Taxonomy:
    """Two-level category hierarchy used to label tricks and tasks."""

    top_categories: tuple[str, ...]
    subcategories: dict[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        if len(set(self.top_categories)) != len(self.top_categories):
            raise ValueError("top-level category names must be unique")
        for top in self.subcategories:
            if top not in self.top_categories:
                raise ValueError(f"subcategories listed for unknown category {top!r}")

    def contains(self, label: LabelPath) -> bool:
        return label.sub in self.subcategories.get(label.top, ())

    def all_labels(self) -> list[LabelPath]:
        """Every (top, sub) pair in taxonomy order."""
        return [
            LabelPath(top, sub)
            for top in self.top_categories
            for sub in self.subcategories.get(top, ())
        ]

    def label_rank(self, label: LabelPath) -> int:
        """Position of *label* in taxonomy order; used for tie-breaking."""
        try:
            return self.all_labels().index(label)
        except ValueError:
            raise KeyError(f"label not in taxonomy: {label}") from None


def load_taxonomy(path: str | Path | None = None) -> Taxonomy:
    """Load a taxonomy from a JSON file, or the bundled default."""
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    else:
        raw = json.loads(
            resources.files("automind.data").joinpath("taxonomy.json").read_text("utf-8")
        )
    return Taxonomy(
        top_categories=tuple(raw["top_categories"]),
        subcategories={k: tuple(v) for k, v in raw["subcategories"].items()},
    )


@dataclass
class TrickEntry:
    """An expert technique extracted from a top-ranked competition post."""

    id: str
    source_task_id: str
    title: str
    body: str
    labels: list[LabelPath] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.body:
            raise ValueError(f"trick {self.id}: body must be non-empty")

    def embedding_text(self) -> str:
        return f"{self.title}\n\n{self.body}"


@dataclass
class PaperMeta:
    title: str
    authors: str = ""
    abstract: str = ""
    keywords: str = ""
    venue: str = ""
    year: str = ""

    def __post_init__(self) -> None:
        if not self.title:
            raise ValueError("paper meta requires a non-empty title")


SUMMARY_FIELDS = (
    "data_type",
    "data_domain",
    "dataset_names",
    "ml_tasks",
    "techniques",
    "contributions",
)


@dataclass
class PaperSummary:
    data_type: str
    data_domain: str
    dataset_names: str
    ml_tasks: str
    techniques: str
    contributions: str

    def concatenated(self) -> str:
        parts = [f"{name}: {getattr(self, name)}" for name in SUMMARY_FIELDS]
        return "\n".join(parts)


@dataclass
class PaperEntry:
    """A peer-reviewed paper plus the structured summary it is retrieved by."""

    id: str
    meta: PaperMeta
    body: str
    summary: PaperSummary | None = None

    def embedding_text(self) -> str:
        if self.summary is not None:
            return f"{self.meta.title}\n{self.summary.concatenated()}"
        return f"{self.meta.title}\n{self.meta.abstract}"


@dataclass(frozen=True)
class KnowledgeQuery:
    """What the retriever knows about the task being solved."""

    task_id: str
    task_labels: tuple[LabelPath, ...]
    free_text: str
    k: int = 3

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
