"""Pluggable text embedding.

The default provider is a deterministic feature-hash embedder: tokens are
hashed into a fixed number of signed buckets and the resulting count vector
is L2-normalized. It needs no network or model weights, and identical text
always embeds to the identical vector, which keeps retrieval reproducible.
"""

from __future__ import annotations

import hashlib
import re
from typing import Protocol

import numpy as np

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class Embedder(Protocol):
    name: str
    dim: int

    def embed(self, texts: list[str]) -> np.ndarray:
        """Map texts to an (n, dim) float32 array of unit vectors."""
        ...


class HashingEmbedder:
    """Feature-hash embedding over lowercase alphanumeric tokens."""

    def __init__(self, dim: int = 256) -> None:
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.name = f"hash-v1-{dim}"

    def _token_slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.sha1(token.encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:4], "little") % self.dim
        sign = 1.0 if digest[4] % 2 == 0 else -1.0
        return bucket, sign

    def embed(self, texts: list[str]) -> np.ndarray:
        vectors = np.zeros((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            for token in _TOKEN_RE.findall(text.lower()):
                bucket, sign = self._token_slot(token)
                vectors[row, bucket] += sign
            norm = float(np.linalg.norm(vectors[row]))
            if norm > 0.0:
                vectors[row] /= norm
        return vectors


def cosine_similarities(query: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Cosine similarity of one query vector against each matrix row."""
    if matrix.size == 0:
        return np.zeros(0, dtype=np.float32)
    q_norm = float(np.linalg.norm(query))
    row_norms = np.linalg.norm(matrix, axis=1)
    denom = np.where(row_norms > 0.0, row_norms, 1.0) * (q_norm if q_norm > 0.0 else 1.0)
    return (matrix @ query) / denom
