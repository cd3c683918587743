"""Vector index over knowledge entries, with label-aware retrieval.

Tricks are retrieved per query label and re-ranked so that label priority
dominates similarity; entries originating from the queried task are always
filtered out. Papers carry no labels and are ranked by summary similarity
alone. The index is immutable once built and persists as a directory of
``entries.jsonl`` + ``vectors.bin`` (little-endian float32, row-major) +
``meta.json``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import IoFailure
from .embedding import Embedder, HashingEmbedder, cosine_similarities
from .entries import (
    KnowledgeQuery,
    LabelPath,
    PaperEntry,
    PaperMeta,
    PaperSummary,
    TrickEntry,
)

META_FILE = "meta.json"
ENTRIES_FILE = "entries.jsonl"
VECTORS_FILE = "vectors.bin"

# Ranking quantizes similarity so the order cannot depend on the float
# summation path (full-matrix vs row-at-a-time products differ by ulps).
SIMILARITY_DECIMALS = 6


def ranking_similarity(value: float) -> float:
    return round(float(value), SIMILARITY_DECIMALS)


@dataclass
class KnowledgeIndex:
    entries: list[TrickEntry | PaperEntry]
    vectors: np.ndarray
    embedder: Embedder

    def __post_init__(self) -> None:
        if len(self.entries) != self.vectors.shape[0] and self.entries:
            raise ValueError("one vector row per entry is required")

    def __len__(self) -> int:
        return len(self.entries)


def build_index(
    entries: list[TrickEntry | PaperEntry], embedder: Embedder | None = None
) -> KnowledgeIndex:
    """Embed every entry and assemble the in-memory index."""
    embedder = embedder or HashingEmbedder()
    texts = [entry.embedding_text() for entry in entries]
    vectors = (
        embedder.embed(texts)
        if texts
        else np.zeros((0, embedder.dim), dtype=np.float32)
    )
    return KnowledgeIndex(entries=list(entries), vectors=vectors, embedder=embedder)


def retrieve(index: KnowledgeIndex, query: KnowledgeQuery) -> list[TrickEntry]:
    """Label-priority retrieval of tricks.

    For each query label in priority order, candidate tricks carrying that
    label are scored by cosine similarity to the query text. Results from a
    higher-priority label always rank above results from a lower-priority
    one; similarity breaks ties within a label. Tricks from the queried task
    are dropped, duplicates keep their best placement, and at most ``k``
    entries are returned.
    """
    if not index.entries:
        return []
    query_vec = index.embedder.embed([query.free_text])[0]
    sims = cosine_similarities(query_vec, index.vectors)

    seen: set[str] = set()
    ranked: list[tuple[int, float, str, TrickEntry]] = []
    for rank, label in enumerate(query.task_labels):
        for position, entry in enumerate(index.entries):
            if not isinstance(entry, TrickEntry):
                continue
            if entry.source_task_id == query.task_id:
                continue
            if label not in entry.labels:
                continue
            if entry.id in seen:
                continue
            seen.add(entry.id)
            ranked.append((rank, -ranking_similarity(sims[position]), entry.id, entry))
    ranked.sort(key=lambda item: item[:3])
    return [entry for _, _, _, entry in ranked[: query.k]]


def retrieve_papers(index: KnowledgeIndex, query: KnowledgeQuery) -> list[PaperEntry]:
    """Similarity-only retrieval over paper summaries."""
    if not index.entries:
        return []
    query_vec = index.embedder.embed([query.free_text])[0]
    sims = cosine_similarities(query_vec, index.vectors)
    scored = [
        (-ranking_similarity(sims[position]), entry.id, entry)
        for position, entry in enumerate(index.entries)
        if isinstance(entry, PaperEntry)
    ]
    scored.sort(key=lambda item: item[:2])
    return [entry for _, _, entry in scored[: query.k]]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _entry_to_record(entry: TrickEntry | PaperEntry) -> dict:
    if isinstance(entry, TrickEntry):
        return {
            "kind": "trick",
            "id": entry.id,
            "source_task_id": entry.source_task_id,
            "title": entry.title,
            "body": entry.body,
            "labels": [[label.top, label.sub] for label in entry.labels],
        }
    return {
        "kind": "paper",
        "id": entry.id,
        "meta": {
            "title": entry.meta.title,
            "authors": entry.meta.authors,
            "abstract": entry.meta.abstract,
            "keywords": entry.meta.keywords,
            "venue": entry.meta.venue,
            "year": entry.meta.year,
        },
        "body": entry.body,
        "summary": None
        if entry.summary is None
        else {
            "data_type": entry.summary.data_type,
            "data_domain": entry.summary.data_domain,
            "dataset_names": entry.summary.dataset_names,
            "ml_tasks": entry.summary.ml_tasks,
            "techniques": entry.summary.techniques,
            "contributions": entry.summary.contributions,
        },
    }


def _entry_from_record(record: dict) -> TrickEntry | PaperEntry:
    if record["kind"] == "trick":
        return TrickEntry(
            id=record["id"],
            source_task_id=record["source_task_id"],
            title=record["title"],
            body=record["body"],
            labels=[LabelPath(top, sub) for top, sub in record["labels"]],
        )
    summary = record.get("summary")
    return PaperEntry(
        id=record["id"],
        meta=PaperMeta(**record["meta"]),
        body=record["body"],
        summary=None if summary is None else PaperSummary(**summary),
    )


def save_index(index: KnowledgeIndex, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / ENTRIES_FILE).open("w", encoding="utf-8") as fh:
        for entry in index.entries:
            fh.write(json.dumps(_entry_to_record(entry), ensure_ascii=True) + "\n")
    vectors = np.ascontiguousarray(index.vectors, dtype="<f4")
    (out / VECTORS_FILE).write_bytes(vectors.tobytes())
    meta = {
        "dim": int(index.embedder.dim),
        "count": len(index.entries),
        "embedder": index.embedder.name,
    }
    (out / META_FILE).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def load_index(index_dir: str | Path, embedder: Embedder | None = None) -> KnowledgeIndex:
    root = Path(index_dir)
    meta_path = root / META_FILE
    if not meta_path.is_file():
        raise IoFailure(f"index metadata not found: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    dim = int(meta["dim"])
    if embedder is None:
        embedder = HashingEmbedder(dim=dim)
        if meta.get("embedder") not in (None, embedder.name):
            raise IoFailure(
                f"index was built with embedder {meta.get('embedder')!r}; "
                f"pass a matching embedder to load it"
            )
    entries = [
        _entry_from_record(json.loads(line))
        for line in (root / ENTRIES_FILE).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    raw = (root / VECTORS_FILE).read_bytes()
    vectors = np.frombuffer(raw, dtype="<f4").reshape(len(entries), dim).copy()
    return KnowledgeIndex(entries=entries, vectors=vectors, embedder=embedder)
