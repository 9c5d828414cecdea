"""Exact (brute-force) vector store with cosine and Euclidean ranking.

Scores are computed row by row with ``np.sum(..., axis=1)`` rather than a
BLAS matrix-vector product, so identical stored vectors always receive
bit-identical scores and ties resolve by ascending ``item_id``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, DegenerateVector, InvalidInput
from .segmenter import Chunk

METRICS = ("cosine", "pairwise")
STORE_MAGIC = "ragqa-vectorstore"
STORE_VERSION = 1


def _as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInput(f"expected a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("vector has non-finite entries")
    return arr


def cosine_similarity(a, b) -> float:
    a, b = _as_vector(a), _as_vector(b)
    if a.shape != b.shape:
        raise InvalidInput(f"dimension mismatch: {a.size} vs {b.size}")
    na, nb = math.sqrt(float(np.sum(a * a))), math.sqrt(float(np.sum(b * b)))
    if na == 0.0 or nb == 0.0:
        raise DegenerateVector("cosine similarity is undefined for a zero-norm vector")
    return min(1.0, max(-1.0, float(np.sum(a * b)) / (na * nb)))


def pairwise_distance(a, b) -> float:
    """Euclidean distance ``||a - b||``."""
    a, b = _as_vector(a), _as_vector(b)
    if a.shape != b.shape:
        raise InvalidInput(f"dimension mismatch: {a.size} vs {b.size}")
    d = a - b
    return math.sqrt(float(np.sum(d * d)))


@dataclass(frozen=True)
class RetrievalHit:
    item_id: int
    chunk: Chunk | None
    score: float
    rank: int


class VectorStore:
    """Immutable collection of ``(chunk, vector)`` items; ``item_id`` is the
    insertion position unless ids are given explicitly."""

    def __init__(self, chunks: Sequence[Chunk | None], vectors, item_ids: Sequence[int] | None = None,
                 dim: int | None = None):
        chunks = list(chunks)
        if len(chunks) == 0:
            self._vectors = np.zeros((0, dim or 0))
        else:
            try:
                self._vectors = np.array(vectors, dtype=float, ndmin=2)
            except ValueError as exc:
                raise InvalidInput("stored vectors must share one dimension") from exc
            if self._vectors.ndim != 2 or self._vectors.shape[0] != len(chunks):
                raise InvalidInput("need exactly one vector per chunk, all of one dimension")
            if not np.all(np.isfinite(self._vectors)):
                raise InvalidInput("stored vectors must be finite")
        self._vectors.setflags(write=False)
        self.chunks = tuple(chunks)
        ids = list(range(len(chunks))) if item_ids is None else [int(i) for i in item_ids]
        if len(ids) != len(chunks) or len(set(ids)) != len(ids):
            raise InvalidInput("item_ids must be unique, one per item")
        self.item_ids = np.asarray(ids, dtype=np.int64)
        self._norms = np.sqrt(np.sum(self._vectors * self._vectors, axis=1))

    @property
    def count(self) -> int:
        return len(self.chunks)

    def __len__(self):
        return self.count

    @property
    def dim(self) -> int:
        return self._vectors.shape[1]

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    def scores(self, query, metric: str) -> np.ndarray:
        q = _as_vector(query)
        if self.count and q.size != self.dim:
            raise InvalidInput(f"query dim {q.size} does not match store dim {self.dim}")
        if metric == "cosine":
            qn = math.sqrt(float(np.sum(q * q)))
            if qn == 0.0:
                raise DegenerateVector("cosine ranking needs a non-zero query")
            if self.count and np.any(self._norms == 0.0):
                raise DegenerateVector("store holds a zero-norm vector; cosine is undefined")
            sims = np.sum(self._vectors * q, axis=1) / (self._norms * qn)
            return np.clip(sims, -1.0, 1.0)
        if metric == "pairwise":
            diff = self._vectors - q
            return np.sqrt(np.sum(diff * diff, axis=1))
        raise InvalidInput(f"unknown metric {metric!r}; expected one of {METRICS}")

    def top_n(self, query, n: int, metric: str = "cosine") -> list[RetrievalHit]:
        if n < 0:
            raise InvalidInput("n must be non-negative")
        scores = self.scores(query, metric)
        if n == 0 or self.count == 0:
            return []
        primary = -scores if metric == "cosine" else scores
        order = np.lexsort((self.item_ids, primary))[:n]
        return [RetrievalHit(int(self.item_ids[i]), self.chunks[i], float(scores[i]), rank)
                for rank, i in enumerate(order, 1)]

    def dump(self, path) -> None:
        """Write a versioned JSON dump: ``{"magic", "version", "dim", "items":
        [{"item_id", "doc_id", "index", "kind", "char_start", "char_end",
        "text", "vector"}]}``."""
        items = []
        for iid, chunk, vec in zip(self.item_ids, self.chunks, self._vectors):
            rec = {"item_id": int(iid), "vector": [float(x) for x in vec]}
            if chunk is not None:
                rec.update(doc_id=chunk.doc_id, index=chunk.index, kind=chunk.kind,
                           char_start=chunk.char_start, char_end=chunk.char_end, text=chunk.text)
            items.append(rec)
        doc = {"magic": STORE_MAGIC, "version": STORE_VERSION, "dim": self.dim, "items": items}
        Path(path).write_text(json.dumps(doc), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "VectorStore":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read vector store dump {path}: {exc}") from exc
        if not isinstance(doc, dict) or doc.get("magic") != STORE_MAGIC:
            raise DataError(f"{path} is not a ragqa vector store dump")
        if doc.get("version") != STORE_VERSION:
            raise DataError(f"unsupported vector store version {doc.get('version')!r}")
        chunks, vectors, ids = [], [], []
        for rec in doc["items"]:
            chunk = None
            if "doc_id" in rec:
                chunk = Chunk(rec["doc_id"], rec["index"], rec["char_start"], rec["char_end"],
                              rec["text"], rec["kind"])
            chunks.append(chunk)
            vectors.append(rec["vector"])
            ids.append(rec["item_id"])
        return cls(chunks, vectors, ids, dim=doc.get("dim"))


def build_store(items: Sequence[tuple[Chunk | None, object]], dim: int | None = None) -> VectorStore:
    """Store over ``(chunk, vector)`` pairs; ids follow list order."""
    items = list(items)
    return VectorStore([c for c, _ in items], [v for _, v in items], dim=dim)


def top_n(store: VectorStore, query, n: int, metric: str = "cosine") -> list[RetrievalHit]:
    return store.top_n(query, n, metric)
