"""Expert knowledge base: corpus ingestion, labeling, indexing, retrieval."""

from .corpus import ParseWarning, ingest_corpus
from .embedding import Embedder, HashingEmbedder, cosine_similarities
from .entries import (
    KnowledgeQuery,
    LabelPath,
    PaperEntry,
    PaperMeta,
    PaperSummary,
    Taxonomy,
    TrickEntry,
    load_taxonomy,
)
from .index import (
    KnowledgeIndex,
    build_index,
    load_index,
    retrieve,
    retrieve_papers,
    save_index,
)
from .labeling import label_entry, label_task, label_text, summarize_paper, vote_labels

__all__ = [
    "Embedder",
    "HashingEmbedder",
    "KnowledgeIndex",
    "KnowledgeQuery",
    "LabelPath",
    "PaperEntry",
    "PaperMeta",
    "PaperSummary",
    "ParseWarning",
    "Taxonomy",
    "TrickEntry",
    "build_index",
    "cosine_similarities",
    "ingest_corpus",
    "label_entry",
    "label_task",
    "label_text",
    "load_index",
    "load_taxonomy",
    "retrieve",
    "retrieve_papers",
    "save_index",
    "summarize_paper",
    "vote_labels",
]
